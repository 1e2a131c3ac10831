#include "promptrec/rec_head.hpp"

#include <algorithm>
#include <cmath>

#include "promptrec/errors.hpp"

namespace promptrec {

RatingPrediction predict_rating(std::size_t user, std::size_t item, const EmbeddingTables& tables) {
  const RowVector u = lookup_user(static_cast<std::int64_t>(user), tables);
  const RowVector i = lookup_item(static_cast<std::int64_t>(item), tables);
  const double raw = u.dot(i);
  return {raw, std::clamp(raw, 1.0, 5.0)};
}

double rating_loss(std::span<const RatingExample> batch, const EmbeddingTables& tables) {
  if (batch.empty()) throw DomainError("rating loss of an empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    const double residual = ex.rating - predict_rating(ex.user, ex.item, tables).raw;
    total += residual * residual;
  }
  return total / static_cast<double>(batch.size());
}

double rating_loss_backward(std::span<const RatingExample> batch, const EmbeddingTables& tables, double scale,
                            EmbeddingTables& grads) {
  if (batch.empty()) throw DomainError("rating loss of an empty batch");
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto u = static_cast<Eigen::Index>(ex.user);
    const auto i = static_cast<Eigen::Index>(ex.item);
    const double residual = ex.rating - predict_rating(ex.user, ex.item, tables).raw;
    total += residual * residual;
    // d/d(raw) of residual^2 / n
    const double coeff = -2.0 * residual / n * scale;
    grads.users.row(u) += coeff * tables.items.row(i);
    grads.items.row(i) += coeff * tables.users.row(u);
  }
  return total / n;
}

double rating_rmse(std::span<const RatingExample> batch, const EmbeddingTables& tables) {
  if (batch.empty()) throw DomainError("RMSE of an empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    const double residual = ex.rating - predict_rating(ex.user, ex.item, tables).clamped;
    total += residual * residual;
  }
  return std::sqrt(total / static_cast<double>(batch.size()));
}

}  // namespace promptrec
