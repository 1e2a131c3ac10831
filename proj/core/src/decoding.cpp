#include "promptrec/decoding.hpp"

#include <stdexcept>

namespace promptrec {

int greedy_choice(const TokenDistribution& dist) {
  int best = -1;
  for (int k = 0; k < static_cast<int>(dist.probs.size()); ++k) {
    if (k == Vocabulary::kBos || k == Vocabulary::kPad || k == Vocabulary::kUnk) continue;
    if (best < 0 || dist.probs(k) > dist.probs(best)) best = k;
  }
  return best;
}

TokenIds generate_tokens(std::size_t user, std::size_t item, const Model& model, const DecodeOptions& options) {
  if (options.max_length == 0) throw std::invalid_argument("max_length must be >= 1");
  const auto& params = model.params;
  if (user >= params.tables.user_count()) throw std::out_of_range("user index " + std::to_string(user));
  if (item >= params.tables.item_count()) throw std::out_of_range("item index " + std::to_string(item));

  const std::size_t max_seq = params.lm.config.max_len;
  TokenIds tokens{Vocabulary::kBos};
  TokenIds generated;
  while (generated.size() < options.max_length && 2 + tokens.size() <= max_seq) {
    const PromptSequence prefix =
        embed_prefix(user, item, tokens, params.tables, params.lm.word_embedding, params.lm.position_embedding);
    const Matrix hidden = forward(prefix.embedded, params.lm);
    const int next = greedy_choice(project_vocab(hidden.row(hidden.rows() - 1), params.lm));
    if (next == Vocabulary::kEos) break;
    tokens.push_back(next);
    generated.push_back(next);
  }
  return generated;
}

Words generate_explanation(std::size_t user, std::size_t item, const Model& model, const DecodeOptions& options) {
  return detokenize(generate_tokens(user, item, model, options), model.vocab);
}

std::vector<Words> generate_corpus(const Model& model, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                   const DecodeOptions& options) {
  std::vector<Words> out;
  out.reserve(pairs.size());
  for (const auto& [u, i] : pairs) out.push_back(generate_explanation(u, i, model, options));
  return out;
}

}  // namespace promptrec
