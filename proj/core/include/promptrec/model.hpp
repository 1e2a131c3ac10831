#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptrec/corpus.hpp"
#include "promptrec/embeddings.hpp"
#include "promptrec/lm_core.hpp"
#include "promptrec/mtl.hpp"

namespace promptrec {

/// Flat view of one trainable tensor (or scalar) for optimizers and checkers.
struct ParamView {
  std::string name;
  std::string group;
  std::span<double> values;
};

/// Everything that receives gradients. The embedding tables feed both the
/// prompt path and the rating head.
struct Parameters {
  EmbeddingTables tables;
  LmParameters lm;
  TaskWeights weights;

  /// Same shapes, all zero (task weights included).
  static Parameters zeros_like(const Parameters& other);

  /// Matrix tensors in checkpoint order: user/item tables then the LM.
  std::vector<NamedTensor> tensors();
  /// tensors() plus the two task weights.
  std::vector<ParamView> views();

  /// Rounds every value to the nearest float.
  void round_to_single();
};

struct Model {
  Vocabulary vocab;
  IdTables ids;
  Parameters params;

  /// `lm.vocab_size` is overwritten with vocab.size(). Task weights start at 1.
  static Model initialize(Vocabulary vocab, IdTables ids, LmConfig lm, std::uint64_t seed, bool single_precision);
};

/// A record resolved against a model's id tables and vocabulary.
struct TrainingExample {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;
  TokenIds explanation;
};

/// Throws NotFoundError for ids the model does not know.
std::vector<TrainingExample> resolve_examples(std::span<const InteractionRecord> records,
                                              std::span<const std::size_t> indices, const Model& model);
std::vector<TrainingExample> resolve_examples(std::span<const InteractionRecord> records, const Model& model);

}  // namespace promptrec
