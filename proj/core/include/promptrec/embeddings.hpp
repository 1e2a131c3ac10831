#pragma once

// User/item embedding tables and continuous-prompt assembly.
//
// Sequence layout fed to the language model (positions are 0-based here):
//
//   position:  0   1   2      3    ...  m+2
//   input:     u   i   <bos>  e_1  ...  e_m
//   target:    -   -   e_1    e_2  ...  <eos>
//
// The u and i rows come straight from the tables; every position also adds
// its learned position vector.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "promptrec/corpus.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

struct EmbeddingTables {
  Matrix users;  ///< |users| x d
  Matrix items;  ///< |items| x d

  std::size_t width() const noexcept { return static_cast<std::size_t>(users.cols()); }
  std::size_t user_count() const noexcept { return static_cast<std::size_t>(users.rows()); }
  std::size_t item_count() const noexcept { return static_cast<std::size_t>(items.rows()); }

  static EmbeddingTables zeros(std::size_t users, std::size_t items, std::size_t width);
  /// Independent U(-0.1, 0.1) entries.
  static EmbeddingTables uniform(std::size_t users, std::size_t items, std::size_t width, std::mt19937_64& rng);
};

/// Row `index` of the item table. Signed so that negative indices are
/// reported as range errors rather than wrapping.
RowVector lookup_item(std::int64_t index, const EmbeddingTables& tables);
RowVector lookup_user(std::int64_t index, const EmbeddingTables& tables);

struct PromptSequence {
  std::size_t user = 0;
  std::size_t item = 0;
  /// Word tokens after the prompt: [<bos>, e_1 .. e_m].
  TokenIds tokens;
  /// Next-token targets aligned with `tokens`: [e_1 .. e_m, <eos>].
  TokenIds targets;
  /// (2 + tokens.size()) x d input rows, position vectors included.
  Matrix embedded;

  std::size_t length() const noexcept { return 2 + tokens.size(); }
  /// Sequence position whose output predicts targets[k].
  static constexpr std::size_t target_position(std::size_t k) noexcept { return 2 + k; }
};

/// Embeds [u, i, tokens...] plus position vectors; no targets. `tokens` must
/// already start with <bos>. Throws std::length_error past the position table.
PromptSequence embed_prefix(std::size_t user, std::size_t item, std::span<const int> tokens,
                            const EmbeddingTables& tables, const Matrix& word_table, const Matrix& position_table);

/// Teacher-forcing sequence for one record. Explanations that would exceed the
/// position table are truncated; the final target is always <eos>.
PromptSequence assemble_prompt(std::size_t user, std::size_t item, std::span<const int> explanation,
                               const EmbeddingTables& tables, const Matrix& word_table, const Matrix& position_table);

/// Routes the gradient of the embedded input rows back to the table rows it
/// was built from. Accumulates (+=).
void scatter_prompt_gradient(const PromptSequence& prompt, const Matrix& grad_embedded, EmbeddingTables& table_grads,
                             Matrix& word_grad, Matrix& position_grad);

}  // namespace promptrec
