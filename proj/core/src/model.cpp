#include "promptrec/model.hpp"

#include <numeric>

namespace promptrec {

namespace {

// Kept out of line: GCC 11 at -O3 merges the two scalar round trips below into
// one vector pack/unpack and then folds that away, leaving the doubles intact.
[[gnu::noinline]] double to_single(double x) { return static_cast<float>(x); }

}  // namespace

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters p;
  p.tables = EmbeddingTables::zeros(other.tables.user_count(), other.tables.item_count(), other.tables.width());
  p.lm = LmParameters::zeros(other.lm.config);
  p.weights = {0.0, 0.0};
  return p;
}

std::vector<NamedTensor> Parameters::tensors() {
  std::vector<NamedTensor> out;
  out.push_back({"user_embedding", "user_embedding", &tables.users});
  out.push_back({"item_embedding", "item_embedding", &tables.items});
  for (auto& t : lm.tensors()) out.push_back(std::move(t));
  return out;
}

std::vector<ParamView> Parameters::views() {
  std::vector<ParamView> out;
  for (auto& t : tensors()) {
    out.push_back({t.name, t.group, {t.tensor->data(), static_cast<std::size_t>(t.tensor->size())}});
  }
  out.push_back({"lambda_s", "lambda", {&weights.lambda_s, 1}});
  out.push_back({"lambda_r", "lambda", {&weights.lambda_r, 1}});
  return out;
}

void Parameters::round_to_single() {
  for (auto& t : tensors()) round_to_float(*t.tensor);
  weights.lambda_s = to_single(weights.lambda_s);
  weights.lambda_r = to_single(weights.lambda_r);
}

Model Model::initialize(Vocabulary vocab, IdTables ids, LmConfig lm, std::uint64_t seed, bool single_precision) {
  lm.vocab_size = vocab.size();
  lm.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.params.tables = EmbeddingTables::uniform(ids.users.size(), ids.items.size(), lm.width, rng);
  m.params.lm = LmParameters::initialized(lm, rng);
  m.vocab = std::move(vocab);
  m.ids = std::move(ids);
  if (single_precision) m.params.round_to_single();
  return m;
}

std::vector<TrainingExample> resolve_examples(std::span<const InteractionRecord> records,
                                              std::span<const std::size_t> indices, const Model& model) {
  std::vector<TrainingExample> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto& r = records[idx];
    out.push_back({model.ids.users.at(r.user_id), model.ids.items.at(r.item_id), r.rating,
                   tokenize(r.explanation, model.vocab)});
  }
  return out;
}

std::vector<TrainingExample> resolve_examples(std::span<const InteractionRecord> records, const Model& model) {
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  return resolve_examples(records, all, model);
}

}  // namespace promptrec
