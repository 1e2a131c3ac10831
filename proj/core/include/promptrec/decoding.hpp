#pragma once

// Autoregressive explanation generation from a (user, item) prompt.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "promptrec/lm_core.hpp"
#include "promptrec/model.hpp"

namespace promptrec {

/// Only greedy search is provided.
enum class DecodeStrategy { kGreedy };

inline constexpr std::size_t kDefaultMaxExplanationLength = 20;

struct DecodeOptions {
  std::size_t max_length = kDefaultMaxExplanationLength;
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
};

/// Highest-probability token with <bos>, <pad> and <unk> excluded; ties go to
/// the lowest index.
int greedy_choice(const TokenDistribution& dist);

/// Word tokens (no <bos>/<eos>) generated from [u, i, <bos>] until <eos>,
/// max_length words, or the model's position limit.
TokenIds generate_tokens(std::size_t user, std::size_t item, const Model& model, const DecodeOptions& options = {});

Words generate_explanation(std::size_t user, std::size_t item, const Model& model,
                           const DecodeOptions& options = {});

std::vector<Words> generate_corpus(const Model& model, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                   const DecodeOptions& options = {});

}  // namespace promptrec
