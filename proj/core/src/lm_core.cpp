#include "promptrec/lm_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

Matrix zeros(std::size_t rows, std::size_t cols) {
  return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Matrix ones(std::size_t rows, std::size_t cols) {
  return Matrix::Ones(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void fill_normal(Matrix& m, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& xhat, Vector& inv_std) {
  const Eigen::Index rows = x.rows();
  const auto width = static_cast<double>(x.cols());
  xhat.resize(rows, x.cols());
  inv_std.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / width;
    const RowVector centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / width;
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& inv_std, const Matrix& gain,
                           Matrix& grad_gain, Matrix& grad_bias) {
  grad_gain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  grad_bias.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto width = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / width;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / width;
    dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
}

void softmax_rows_in_place(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

Matrix linear(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  Matrix y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

}  // namespace

void LmConfig::validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ValidationError("hidden width must be a positive multiple of the head count");
  }
  if (layers == 0 || ff_width == 0) throw ValidationError("layer count and feed-forward width must be positive");
  if (max_len < 3) throw ValidationError("max sequence length must be at least 3");
  if (vocab_size < 5) throw ValidationError("vocabulary must contain the specials and at least one word");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

LmParameters LmParameters::zeros(const LmConfig& config) {
  config.validate();
  const std::size_t d = config.width;
  const std::size_t f = config.ff_width;
  const std::size_t v = config.vocab_size;
  LmParameters p;
  p.config = config;
  p.word_embedding = promptrec::zeros(v, d);
  p.position_embedding = promptrec::zeros(config.max_len, d);
  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    l.ln1_gain = promptrec::zeros(1, d);
    l.ln1_bias = promptrec::zeros(1, d);
    l.qkv_weight = promptrec::zeros(d, 3 * d);
    l.qkv_bias = promptrec::zeros(1, 3 * d);
    l.proj_weight = promptrec::zeros(d, d);
    l.proj_bias = promptrec::zeros(1, d);
    l.ln2_gain = promptrec::zeros(1, d);
    l.ln2_bias = promptrec::zeros(1, d);
    l.ff_in_weight = promptrec::zeros(d, f);
    l.ff_in_bias = promptrec::zeros(1, f);
    l.ff_out_weight = promptrec::zeros(f, d);
    l.ff_out_bias = promptrec::zeros(1, d);
  }
  p.final_gain = promptrec::zeros(1, d);
  p.final_bias = promptrec::zeros(1, d);
  p.output_weight = promptrec::zeros(v, d);
  p.output_bias = promptrec::zeros(1, v);
  return p;
}

LmParameters LmParameters::initialized(const LmConfig& config, std::mt19937_64& rng) {
  auto p = zeros(config);
  const std::size_t d = config.width;
  fill_uniform(p.word_embedding, 0.1, rng);
  fill_uniform(p.position_embedding, 0.1, rng);
  for (auto& l : p.layers) {
    l.ln1_gain = ones(1, d);
    l.ln2_gain = ones(1, d);
    fill_normal(l.qkv_weight, 0.02, rng);
    fill_normal(l.proj_weight, 0.02, rng);
    fill_normal(l.ff_in_weight, 0.02, rng);
    fill_normal(l.ff_out_weight, 0.02, rng);
  }
  p.final_gain = ones(1, d);
  fill_normal(p.output_weight, 0.02, rng);
  return p;
}

std::vector<NamedTensor> LmParameters::tensors() {
  std::vector<NamedTensor> out;
  out.push_back({"word_embedding", "word_embedding", &word_embedding});
  out.push_back({"position_embedding", "position_embedding", &position_embedding});
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& l = layers[k];
    const std::string pre = "layer" + std::to_string(k) + ".";
    out.push_back({pre + "ln1_gain", "layer_norm", &l.ln1_gain});
    out.push_back({pre + "ln1_bias", "layer_norm", &l.ln1_bias});
    out.push_back({pre + "qkv_weight", "attention", &l.qkv_weight});
    out.push_back({pre + "qkv_bias", "attention", &l.qkv_bias});
    out.push_back({pre + "proj_weight", "attention", &l.proj_weight});
    out.push_back({pre + "proj_bias", "attention", &l.proj_bias});
    out.push_back({pre + "ln2_gain", "layer_norm", &l.ln2_gain});
    out.push_back({pre + "ln2_bias", "layer_norm", &l.ln2_bias});
    out.push_back({pre + "ff_in_weight", "feed_forward", &l.ff_in_weight});
    out.push_back({pre + "ff_in_bias", "feed_forward", &l.ff_in_bias});
    out.push_back({pre + "ff_out_weight", "feed_forward", &l.ff_out_weight});
    out.push_back({pre + "ff_out_bias", "feed_forward", &l.ff_out_bias});
  }
  out.push_back({"final_gain", "layer_norm", &final_gain});
  out.push_back({"final_bias", "layer_norm", &final_bias});
  out.push_back({"output_weight", "output_weight", &output_weight});
  out.push_back({"output_bias", "output_bias", &output_bias});
  return out;
}

Matrix Dropout::mask(Eigen::Index rows, Eigen::Index cols) {
  std::bernoulli_distribution keep(1.0 - rate_);
  const double scale = 1.0 / (1.0 - rate_);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = keep(*rng_) ? scale : 0.0;
  return m;
}

Matrix forward(const Matrix& embedded, const LmParameters& params) {
  ForwardCache cache;
  return forward(embedded, params, cache, nullptr);
}

Matrix forward(const Matrix& embedded, const LmParameters& params, ForwardCache& cache, Dropout* dropout) {
  const auto& cfg = params.config;
  const Eigen::Index len = embedded.rows();
  if (len > static_cast<Eigen::Index>(cfg.max_len)) {
    throw std::length_error("sequence length " + std::to_string(len) + " exceeds maximum " +
                            std::to_string(cfg.max_len));
  }
  const auto d = static_cast<Eigen::Index>(cfg.width);
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = dropout != nullptr && dropout->rate() > 0.0;

  cache.layers.resize(params.layers.size());
  Matrix x = embedded;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& l = params.layers[li];
    auto& c = cache.layers[li];
    c.input = x;
    c.ln1_out = layer_norm(x, l.ln1_gain, l.ln1_bias, c.ln1_xhat, c.ln1_inv_std);
    c.qkv = linear(c.ln1_out, l.qkv_weight, l.qkv_bias);

    c.context.setZero(len, d);
    c.attn.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      Matrix scores = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < len; ++r) {
        for (Eigen::Index col = r + 1; col < len; ++col) scores(r, col) = -std::numeric_limits<double>::infinity();
      }
      softmax_rows_in_place(scores);
      c.context.middleCols(h * dh, dh) = scores * v;
      c.attn[static_cast<std::size_t>(h)] = std::move(scores);
    }
    Matrix attn_out = linear(c.context, l.proj_weight, l.proj_bias);
    if (drop) {
      c.attn_drop_mask = dropout->mask(len, d);
      attn_out.array() *= c.attn_drop_mask.array();
    } else {
      c.attn_drop_mask.resize(0, 0);
    }
    c.mid = x + attn_out;

    c.ln2_out = layer_norm(c.mid, l.ln2_gain, l.ln2_bias, c.ln2_xhat, c.ln2_inv_std);
    c.ff_pre = linear(c.ln2_out, l.ff_in_weight, l.ff_in_bias);
    c.ff_act = c.ff_pre.unaryExpr(&gelu);
    Matrix ff_out = linear(c.ff_act, l.ff_out_weight, l.ff_out_bias);
    if (drop) {
      c.ff_drop_mask = dropout->mask(len, d);
      ff_out.array() *= c.ff_drop_mask.array();
    } else {
      c.ff_drop_mask.resize(0, 0);
    }
    x = c.mid + ff_out;
  }
  cache.hidden = layer_norm(x, params.final_gain, params.final_bias, cache.final_xhat, cache.final_inv_std);
  return cache.hidden;
}

Matrix backward(const ForwardCache& cache, const LmParameters& params, const Matrix& grad_hidden,
                LmParameters& grads) {
  const auto& cfg = params.config;
  const auto d = static_cast<Eigen::Index>(cfg.width);
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = layer_norm_backward(grad_hidden, cache.final_xhat, cache.final_inv_std, params.final_gain,
                                  grads.final_gain, grads.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& l = params.layers[li];
    const auto& c = cache.layers[li];
    auto& g = grads.layers[li];

    // x_out = mid + dropout(ff_out)
    Matrix d_ff_out = dx;
    if (c.ff_drop_mask.size() != 0) d_ff_out.array() *= c.ff_drop_mask.array();
    g.ff_out_bias.row(0) += d_ff_out.colwise().sum();
    g.ff_out_weight.noalias() += c.ff_act.transpose() * d_ff_out;
    Matrix d_ff_pre = d_ff_out * l.ff_out_weight.transpose();
    d_ff_pre.array() *= c.ff_pre.unaryExpr(&gelu_grad).array();
    g.ff_in_bias.row(0) += d_ff_pre.colwise().sum();
    g.ff_in_weight.noalias() += c.ln2_out.transpose() * d_ff_pre;
    const Matrix d_ln2_out = d_ff_pre * l.ff_in_weight.transpose();
    const Matrix d_mid =
        dx + layer_norm_backward(d_ln2_out, c.ln2_xhat, c.ln2_inv_std, l.ln2_gain, g.ln2_gain, g.ln2_bias);

    // mid = input + dropout(attn_out)
    Matrix d_attn_out = d_mid;
    if (c.attn_drop_mask.size() != 0) d_attn_out.array() *= c.attn_drop_mask.array();
    g.proj_bias.row(0) += d_attn_out.colwise().sum();
    g.proj_weight.noalias() += c.context.transpose() * d_attn_out;
    const Matrix d_context = d_attn_out * l.proj_weight.transpose();

    Matrix d_qkv = Matrix::Zero(c.qkv.rows(), c.qkv.cols());
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Matrix& a = c.attn[static_cast<std::size_t>(h)];
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const auto dc = d_context.middleCols(h * dh, dh);
      const Matrix da = dc * v.transpose();
      d_qkv.middleCols(2 * d + h * dh, dh).noalias() += a.transpose() * dc;
      const Vector row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = a.array() * (da.array().colwise() - row_dot.array());
      ds *= scale;
      d_qkv.middleCols(h * dh, dh).noalias() += ds * k;
      d_qkv.middleCols(d + h * dh, dh).noalias() += ds.transpose() * q;
    }
    g.qkv_bias.row(0) += d_qkv.colwise().sum();
    g.qkv_weight.noalias() += c.ln1_out.transpose() * d_qkv;
    const Matrix d_ln1_out = d_qkv * l.qkv_weight.transpose();
    dx = d_mid + layer_norm_backward(d_ln1_out, c.ln1_xhat, c.ln1_inv_std, l.ln1_gain, g.ln1_gain, g.ln1_bias);
  }
  return dx;
}

TokenDistribution project_vocab(const RowVector& hidden, const LmParameters& params) {
  Vector logits = params.output_weight * hidden.transpose() + params.output_bias.row(0).transpose();
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return {e / e.sum()};
}

namespace {

// Softmax over the vocabulary for every target position; rows align with prompt.targets.
Matrix target_distributions(const Matrix& hidden, const PromptSequence& prompt, const LmParameters& params) {
  const auto n = static_cast<Eigen::Index>(prompt.targets.size());
  Matrix probs = hidden.middleRows(PromptSequence::target_position(0), n) * params.output_weight.transpose();
  probs.rowwise() += params.output_bias.row(0);
  softmax_rows_in_place(probs);
  return probs;
}

double mean_target_nll(const Matrix& probs, const PromptSequence& prompt) {
  double total = 0.0;
  for (std::size_t k = 0; k < prompt.targets.size(); ++k) {
    total -= std::log(std::max(probs(static_cast<Eigen::Index>(k), prompt.targets[k]), kProbabilityFloor));
  }
  return total / static_cast<double>(prompt.targets.size());
}

}  // namespace

double record_nll(const PromptSequence& prompt, const LmParameters& params) {
  if (prompt.targets.empty()) throw DomainError("sequence has no targets");
  const Matrix hidden = forward(prompt.embedded, params);
  return mean_target_nll(target_distributions(hidden, prompt, params), prompt);
}

double sequence_nll(std::span<const PromptSequence> batch, const LmParameters& params) {
  if (batch.empty()) throw DomainError("empty batch");
  double total = 0.0;
  for (const auto& p : batch) total += record_nll(p, params);
  return total / static_cast<double>(batch.size());
}

double record_nll_backward(const PromptSequence& prompt, const LmParameters& params, double scale,
                           LmParameters& grads, Matrix& grad_embedded, Dropout* dropout) {
  if (prompt.targets.empty()) throw DomainError("sequence has no targets");
  ForwardCache cache;
  const Matrix hidden = forward(prompt.embedded, params, cache, dropout);
  Matrix dlogits = target_distributions(hidden, prompt, params);
  const double loss = mean_target_nll(dlogits, prompt);

  const auto n = static_cast<Eigen::Index>(prompt.targets.size());
  for (Eigen::Index k = 0; k < n; ++k) dlogits(k, prompt.targets[static_cast<std::size_t>(k)]) -= 1.0;
  dlogits *= scale / static_cast<double>(n);

  const auto first = static_cast<Eigen::Index>(PromptSequence::target_position(0));
  const auto target_hidden = hidden.middleRows(first, n);
  grads.output_weight.noalias() += dlogits.transpose() * target_hidden;
  grads.output_bias.row(0) += dlogits.colwise().sum();

  Matrix grad_hidden = Matrix::Zero(hidden.rows(), hidden.cols());
  grad_hidden.middleRows(first, n).noalias() = dlogits * params.output_weight;
  grad_embedded = backward(cache, params, grad_hidden, grads);
  return loss;
}

}  // namespace promptrec
