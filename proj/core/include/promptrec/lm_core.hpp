#pragma once

// Small decoder-only transformer (pre-norm, GELU feed-forward, learned
// absolute positions) with an untied vocabulary projection
//
//   z = softmax(W O_s + b),   W: |V| x d,  b: |V|
//
// and the per-record sequence negative log-likelihood. Forward and backward
// are written out by hand; the gradient checker in trainer.hpp verifies them.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "promptrec/embeddings.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

struct LmConfig {
  std::size_t width = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_width = 256;
  std::size_t max_len = 24;
  std::size_t vocab_size = 0;
  double dropout = 0.0;

  /// Throws ValidationError when the shape constraints do not hold.
  void validate() const;
  friend bool operator==(const LmConfig&, const LmConfig&) = default;
};

struct LayerParameters {
  Matrix ln1_gain, ln1_bias;        // 1 x d
  Matrix qkv_weight, qkv_bias;      // d x 3d, 1 x 3d
  Matrix proj_weight, proj_bias;    // d x d, 1 x d
  Matrix ln2_gain, ln2_bias;        // 1 x d
  Matrix ff_in_weight, ff_in_bias;  // d x f, 1 x f
  Matrix ff_out_weight, ff_out_bias;  // f x d, 1 x d
};

/// A named parameter tensor. `group` collects tensors that are reported
/// together by the gradient checker.
struct NamedTensor {
  std::string name;
  std::string group;
  Matrix* tensor;
};

struct LmParameters {
  LmConfig config;
  Matrix word_embedding;      // |V| x d
  Matrix position_embedding;  // max_len x d
  std::vector<LayerParameters> layers;
  Matrix final_gain, final_bias;  // 1 x d
  Matrix output_weight;           // |V| x d
  Matrix output_bias;             // 1 x |V|

  /// Every tensor zero, layer-norm gains included.
  static LmParameters zeros(const LmConfig& config);
  /// Word and position tables U(-0.1, 0.1); linear weights N(0, 0.02); biases 0;
  /// layer-norm gains 1.
  static LmParameters initialized(const LmConfig& config, std::mt19937_64& rng);

  /// Stable order; used by the optimizer, the checkpoint writer and the gradient checker.
  std::vector<NamedTensor> tensors();
};

struct TokenDistribution {
  Vector probs;
};

/// Inverted-dropout masks for one training forward pass.
class Dropout {
 public:
  Dropout(double rate, std::mt19937_64& rng) : rate_(rate), rng_(&rng) {}
  double rate() const noexcept { return rate_; }
  /// Mask entries are 0 or 1/(1-rate).
  Matrix mask(Eigen::Index rows, Eigen::Index cols);

 private:
  double rate_;
  std::mt19937_64* rng_;
};

struct LayerCache {
  Matrix input;          // residual stream entering the layer
  Matrix ln1_xhat;       // normalized input of ln1
  Vector ln1_inv_std;
  Matrix ln1_out;
  Matrix qkv;
  std::vector<Matrix> attn;  // per head, T x T row-stochastic
  Matrix context;            // T x d
  Matrix attn_drop_mask;     // empty when dropout is off
  Matrix mid;                // residual stream after attention
  Matrix ln2_xhat;
  Vector ln2_inv_std;
  Matrix ln2_out;
  Matrix ff_pre;   // T x f, before GELU
  Matrix ff_act;   // T x f
  Matrix ff_drop_mask;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix final_xhat;
  Vector final_inv_std;
  Matrix hidden;  // O, T x d
};

/// Hidden states O for an embedded sequence (T x d). Causal: row k depends
/// only on input rows 0..k. Throws std::length_error past max_len.
Matrix forward(const Matrix& embedded, const LmParameters& params);
Matrix forward(const Matrix& embedded, const LmParameters& params, ForwardCache& cache, Dropout* dropout = nullptr);

/// Backpropagates dLoss/dO through the cached pass. Parameter gradients are
/// accumulated into `grads`; returns dLoss/d(embedded).
Matrix backward(const ForwardCache& cache, const LmParameters& params, const Matrix& grad_hidden,
                LmParameters& grads);

/// softmax(W h + b) for one hidden row.
TokenDistribution project_vocab(const RowVector& hidden, const LmParameters& params);

/// Floor applied inside -log to keep the loss finite.
inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over the record's targets of -log z[target].
double record_nll(const PromptSequence& prompt, const LmParameters& params);

/// Mean over records of record_nll (records weigh equally regardless of length).
double sequence_nll(std::span<const PromptSequence> batch, const LmParameters& params);

/// record_nll plus its gradient: accumulates scale * d(record_nll)/d(params)
/// into `grads` and writes scale * d(record_nll)/d(embedded) to `grad_embedded`.
double record_nll_backward(const PromptSequence& prompt, const LmParameters& params, double scale,
                           LmParameters& grads, Matrix& grad_embedded, Dropout* dropout = nullptr);

}  // namespace promptrec
