#include "promptrec/embeddings.hpp"

#include <stdexcept>
#include <string>

namespace promptrec {

namespace {

RowVector lookup_row(std::int64_t index, const Matrix& table, const char* what) {
  if (index < 0 || index >= table.rows()) {
    throw std::out_of_range(std::string(what) + " index " + std::to_string(index) + " outside [0, " +
                            std::to_string(table.rows()) + ")");
  }
  return table.row(index);
}

}  // namespace

EmbeddingTables EmbeddingTables::zeros(std::size_t users, std::size_t items, std::size_t width) {
  const auto d = static_cast<Eigen::Index>(width);
  return {Matrix::Zero(static_cast<Eigen::Index>(users), d), Matrix::Zero(static_cast<Eigen::Index>(items), d)};
}

EmbeddingTables EmbeddingTables::uniform(std::size_t users, std::size_t items, std::size_t width,
                                         std::mt19937_64& rng) {
  auto t = zeros(users, items, width);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (Eigen::Index k = 0; k < t.users.size(); ++k) t.users.data()[k] = dist(rng);
  for (Eigen::Index k = 0; k < t.items.size(); ++k) t.items.data()[k] = dist(rng);
  return t;
}

RowVector lookup_item(std::int64_t index, const EmbeddingTables& tables) {
  return lookup_row(index, tables.items, "item");
}

RowVector lookup_user(std::int64_t index, const EmbeddingTables& tables) {
  return lookup_row(index, tables.users, "user");
}

PromptSequence embed_prefix(std::size_t user, std::size_t item, std::span<const int> tokens,
                            const EmbeddingTables& tables, const Matrix& word_table, const Matrix& position_table) {
  PromptSequence p;
  p.user = user;
  p.item = item;
  p.tokens.assign(tokens.begin(), tokens.end());
  const auto len = static_cast<Eigen::Index>(p.length());
  if (len > position_table.rows()) {
    throw std::length_error("sequence of length " + std::to_string(len) + " exceeds maximum " +
                            std::to_string(position_table.rows()));
  }
  p.embedded.resize(len, static_cast<Eigen::Index>(tables.width()));
  p.embedded.row(0) = lookup_user(static_cast<std::int64_t>(user), tables);
  p.embedded.row(1) = lookup_item(static_cast<std::int64_t>(item), tables);
  for (std::size_t k = 0; k < p.tokens.size(); ++k) {
    const int tok = p.tokens[k];
    if (tok < 0 || tok >= word_table.rows()) throw std::out_of_range("token " + std::to_string(tok));
    p.embedded.row(static_cast<Eigen::Index>(k + 2)) = word_table.row(tok);
  }
  p.embedded += position_table.topRows(len);
  return p;
}

PromptSequence assemble_prompt(std::size_t user, std::size_t item, std::span<const int> explanation,
                               const EmbeddingTables& tables, const Matrix& word_table, const Matrix& position_table) {
  const auto max_len = static_cast<std::size_t>(position_table.rows());
  if (max_len < 3) throw std::length_error("position table shorter than the minimal prompt");
  const std::size_t kept = std::min(explanation.size(), max_len - 3);

  TokenIds tokens;
  tokens.reserve(kept + 1);
  tokens.push_back(Vocabulary::kBos);
  tokens.insert(tokens.end(), explanation.begin(), explanation.begin() + static_cast<std::ptrdiff_t>(kept));

  auto p = embed_prefix(user, item, tokens, tables, word_table, position_table);
  p.targets.assign(explanation.begin(), explanation.begin() + static_cast<std::ptrdiff_t>(kept));
  p.targets.push_back(Vocabulary::kEos);
  return p;
}

void scatter_prompt_gradient(const PromptSequence& prompt, const Matrix& grad_embedded, EmbeddingTables& table_grads,
                             Matrix& word_grad, Matrix& position_grad) {
  const auto len = static_cast<Eigen::Index>(prompt.length());
  table_grads.users.row(static_cast<Eigen::Index>(prompt.user)) += grad_embedded.row(0);
  table_grads.items.row(static_cast<Eigen::Index>(prompt.item)) += grad_embedded.row(1);
  for (std::size_t k = 0; k < prompt.tokens.size(); ++k) {
    word_grad.row(prompt.tokens[k]) += grad_embedded.row(static_cast<Eigen::Index>(k + 2));
  }
  position_grad.topRows(len) += grad_embedded;
}

}  // namespace promptrec
