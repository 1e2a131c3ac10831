#pragma once

// Matrix-factorization rating head on the shared embedding tables:
// r_hat(u, i) = <U_u, I_i>, no biases.

#include <cstddef>
#include <span>

#include "promptrec/embeddings.hpp"

namespace promptrec {

struct RatingPrediction {
  double raw = 0.0;
  /// raw clamped to [1, 5]; reporting only, losses use raw.
  double clamped = 1.0;
};

struct RatingExample {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;
};

RatingPrediction predict_rating(std::size_t user, std::size_t item, const EmbeddingTables& tables);

/// Mean squared error of the raw predictions. Throws DomainError on an empty batch.
double rating_loss(std::span<const RatingExample> batch, const EmbeddingTables& tables);

/// rating_loss plus scale * its gradient accumulated into `grads`.
double rating_loss_backward(std::span<const RatingExample> batch, const EmbeddingTables& tables, double scale,
                            EmbeddingTables& grads);

/// Root mean squared error of the clamped predictions.
double rating_rmse(std::span<const RatingExample> batch, const EmbeddingTables& tables);

}  // namespace promptrec
