#include "promptrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "promptrec/errors.hpp"
#include "promptrec/rec_head.hpp"

namespace promptrec {

std::string_view to_string(TaskSelection tasks) {
  switch (tasks) {
    case TaskSelection::kBoth:
      return "both";
    case TaskSelection::kRating:
      return "rating";
    case TaskSelection::kExplanation:
      return "explanation";
  }
  return "both";
}

std::optional<TaskSelection> parse_task_selection(std::string_view name) {
  if (name == "both") return TaskSelection::kBoth;
  if (name == "rating") return TaskSelection::kRating;
  if (name == "explanation") return TaskSelection::kExplanation;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be > 0");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (max_epochs == 0) throw ValidationError("max_epochs must be >= 1");
  if (patience == 0) throw ValidationError("patience must be >= 1");
  if (!(rating_loss_scale > 0.0)) throw ValidationError("rating_loss_scale must be > 0");
  LmConfig shape = lm;
  shape.vocab_size = std::max<std::size_t>(shape.vocab_size, 5);
  shape.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"split_seed", c.split_seed},
      {"loss_form", std::string(to_string(c.loss_form))},
      {"tasks", std::string(to_string(c.tasks))},
      {"rating_loss_scale", c.rating_loss_scale},
      {"double_precision", c.double_precision},
      {"min_count", c.min_count},
      {"width", c.lm.width},
      {"layers", c.lm.layers},
      {"heads", c.lm.heads},
      {"ff_width", c.lm.ff_width},
      {"max_len", c.lm.max_len},
      {"dropout", c.lm.dropout},
      {"corpus", c.corpus_path},
  };
}

void apply_json(const nlohmann::json& doc, TrainConfig& c) {
  if (!doc.is_object()) throw ValidationError("config document must be a flat object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "split_seed") c.split_seed = value.get<std::uint64_t>();
      else if (key == "loss_form") {
        const auto form = parse_loss_form(value.get<std::string>());
        if (!form) throw ValidationError("loss_form must be fixed, kendall or positive");
        c.loss_form = *form;
      } else if (key == "tasks") {
        const auto tasks = parse_task_selection(value.get<std::string>());
        if (!tasks) throw ValidationError("tasks must be both, rating or explanation");
        c.tasks = *tasks;
      } else if (key == "rating_loss_scale") c.rating_loss_scale = value.get<double>();
      else if (key == "double_precision") c.double_precision = value.get<bool>();
      else if (key == "min_count") c.min_count = value.get<std::size_t>();
      else if (key == "width") c.lm.width = value.get<std::size_t>();
      else if (key == "layers") c.lm.layers = value.get<std::size_t>();
      else if (key == "heads") c.lm.heads = value.get<std::size_t>();
      else if (key == "ff_width") c.lm.ff_width = value.get<std::size_t>();
      else if (key == "max_len") c.lm.max_len = value.get<std::size_t>();
      else if (key == "dropout") c.lm.dropout = value.get<double>();
      else if (key == "corpus") c.corpus_path = value.get<std::string>();
      else if (key == "vocab_size") continue;  // derived from the corpus
      else throw ValidationError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  }
}

// Adam

void Adam::step(std::span<const ParamView> params, std::span<const ParamView> grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values;
    const auto g = grads[k].values;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t e = 0; e < values.size(); ++e) {
      m[e] = beta1 * m[e] + (1.0 - beta1) * g[e];
      v[e] = beta2 * v[e] + (1.0 - beta2) * g[e] * g[e];
      const double m_hat = m[e] / correction1;
      const double v_hat = v[e] / correction2;
      values[e] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    }
  }
}

// Early stopping

bool EarlyStopping::update(std::size_t epoch, double loss) {
  improved_ = loss < best_loss_;
  if (improved_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

// Objective

namespace {

bool uses_explanation(TaskSelection t) { return t != TaskSelection::kRating; }
bool uses_rating(TaskSelection t) { return t != TaskSelection::kExplanation; }

std::vector<RatingExample> rating_examples(std::span<const TrainingExample> batch) {
  std::vector<RatingExample> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back({ex.user, ex.item, ex.rating});
  return out;
}

PromptSequence prompt_for(const TrainingExample& ex, const Parameters& params) {
  return assemble_prompt(ex.user, ex.item, ex.explanation, params.tables, params.lm.word_embedding,
                         params.lm.position_embedding);
}

}  // namespace

LossBreakdown batch_objective(const Parameters& params, std::span<const TrainingExample> batch,
                              const TrainConfig& config) {
  if (batch.empty()) throw DomainError("empty batch");
  LossBreakdown out;
  if (uses_explanation(config.tasks)) {
    double total = 0.0;
    for (const auto& ex : batch) total += record_nll(prompt_for(ex, params), params.lm);
    out.loss_s = total / static_cast<double>(batch.size());
    out.joint += task_term(config.loss_form, out.loss_s, params.weights.lambda_s).value;
  }
  if (uses_rating(config.tasks)) {
    out.loss_r = rating_loss(rating_examples(batch), params.tables);
    out.joint += task_term(config.loss_form, config.rating_loss_scale * out.loss_r, params.weights.lambda_r).value;
  }
  return out;
}

LossBreakdown batch_gradient(const Parameters& params, std::span<const TrainingExample> batch,
                             const TrainConfig& config, Parameters& grads, Dropout* dropout) {
  if (batch.empty()) throw DomainError("empty batch");
  const bool trains_lambda = config.loss_form != LossForm::kFixed;
  const double n = static_cast<double>(batch.size());
  LossBreakdown out;

  if (uses_explanation(config.tasks)) {
    // The coefficient of L_S in every form depends on lambda only.
    const double coeff = task_term(config.loss_form, 0.0, params.weights.lambda_s).d_loss;
    double total = 0.0;
    Matrix grad_embedded;
    for (const auto& ex : batch) {
      const PromptSequence prompt = prompt_for(ex, params);
      total += record_nll_backward(prompt, params.lm, coeff / n, grads.lm, grad_embedded, dropout);
      scatter_prompt_gradient(prompt, grad_embedded, grads.tables, grads.lm.word_embedding,
                              grads.lm.position_embedding);
    }
    out.loss_s = total / n;
    const TaskTerm term = task_term(config.loss_form, out.loss_s, params.weights.lambda_s);
    out.joint += term.value;
    if (trains_lambda) grads.weights.lambda_s += term.d_lambda;
  }
  if (uses_rating(config.tasks)) {
    const double coeff =
        task_term(config.loss_form, 0.0, params.weights.lambda_r).d_loss * config.rating_loss_scale;
    out.loss_r = rating_loss_backward(rating_examples(batch), params.tables, coeff, grads.tables);
    const TaskTerm term =
        task_term(config.loss_form, config.rating_loss_scale * out.loss_r, params.weights.lambda_r);
    out.joint += term.value;
    if (trains_lambda) grads.weights.lambda_r += term.d_lambda;
  }
  return out;
}

std::optional<LossBreakdown> validate(const Parameters& params, std::span<const TrainingExample> validation,
                                      const TrainConfig& config) {
  if (validation.empty()) return std::nullopt;
  return batch_objective(params, validation, config);
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},       {"train_loss", r.train_loss}, {"val_loss", nullptr},
                      {"L_S", r.loss_s},        {"L_R", r.loss_r},            {"lambda_S", r.lambda_s},
                      {"lambda_R", r.lambda_r}};
  if (r.val_loss) j["val_loss"] = *r.val_loss;
  return j;
}

// Training loop

TrainResult train(const TrainConfig& config, const DatasetSplit& split, const Corpus& corpus,
                  const EpochCallback& on_epoch) {
  config.validate();
  Model model = Model::initialize(build_vocabulary(corpus.records, config.min_count), index_ids(corpus.records),
                                  config.lm, config.seed, !config.double_precision);
  const auto train_set = resolve_examples(corpus.records, split.train, model);
  const auto validation_set = resolve_examples(corpus.records, split.validation, model);
  return train_model(std::move(model), config, train_set, validation_set, on_epoch);
}

TrainResult train_model(Model model, const TrainConfig& config, std::span<const TrainingExample> train_set,
                        std::span<const TrainingExample> validation_set, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");

  // Independent streams so that toggling dropout leaves the batch order unchanged.
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  Dropout dropout(model.params.lm.config.dropout, dropout_rng);
  Dropout* dropout_ptr = model.params.lm.config.dropout > 0.0 ? &dropout : nullptr;

  Adam adam;
  adam.learning_rate = config.learning_rate;
  EarlyStopping stopping(config.patience);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingExample> batch;

  TrainResult result;
  result.model = model;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double joint_sum = 0.0;
    double s_sum = 0.0;
    double r_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(train_set[order[k]]);

      Parameters grads = Parameters::zeros_like(model.params);
      const LossBreakdown loss = batch_gradient(model.params, batch, config, grads, dropout_ptr);
      if (!std::isfinite(loss.joint)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " (L_S=" << loss.loss_s
            << ", L_R=" << loss.loss_r << ")";
        throw TrainingAborted(epoch, batch_index, msg.str());
      }
      auto param_views = model.params.views();
      adam.step(param_views, grads.views());
      model.params.weights.lambda_s = clip_lambda(model.params.weights.lambda_s);
      model.params.weights.lambda_r = clip_lambda(model.params.weights.lambda_r);
      if (!config.double_precision) model.params.round_to_single();

      const auto size = static_cast<double>(batch.size());
      joint_sum += loss.joint * size;
      s_sum += loss.loss_s * size;
      r_sum += loss.loss_r * size;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const auto n = static_cast<double>(train_set.size());
    rec.train_loss = joint_sum / n;
    rec.loss_s = s_sum / n;
    rec.loss_r = r_sum / n;
    if (const auto val = validate(model.params, validation_set, config)) rec.val_loss = val->joint;
    rec.lambda_s = model.params.weights.lambda_s;
    rec.lambda_r = model.params.weights.lambda_r;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopping.update(epoch, rec.val_loss.value_or(rec.train_loss));
    if (stopping.improved()) result.model = model;
    if (stop) break;
  }
  result.best_epoch = stopping.best_epoch();
  result.best_loss = stopping.best_loss();
  return result;
}

// Gradient checking

double GradientCheckReport::worst() const {
  double w = 0.0;
  for (const auto& [group, err] : max_relative_error) w = std::max(w, err);
  return w;
}

namespace {

double relative_error(double analytic, double numeric, double abs_floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
}

}  // namespace

double finite_difference_error(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic, double epsilon,
                               double abs_floor) {
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + epsilon;
    const double plus = f(probe);
    probe[k] = orig - epsilon;
    const double minus = f(probe);
    probe[k] = orig;
    worst = std::max(worst, relative_error(analytic[k], (plus - minus) / (2.0 * epsilon), abs_floor));
  }
  return worst;
}

GradientCheckReport gradient_check(Parameters& params, std::span<const TrainingExample> batch,
                                   const TrainConfig& config, double epsilon, double abs_floor,
                                   std::size_t max_entries_per_tensor) {
  if (!config.double_precision) throw ValidationError("gradient_check requires double_precision");
  Parameters grads = Parameters::zeros_like(params);
  batch_gradient(params, batch, config, grads);

  GradientCheckReport report;
  auto param_views = params.views();
  const auto grad_views = grads.views();
  for (std::size_t k = 0; k < param_views.size(); ++k) {
    const auto& view = param_views[k];
    if (view.group == "lambda" && config.loss_form == LossForm::kFixed) continue;
    double& worst = report.max_relative_error[view.group];
    const std::size_t count = max_entries_per_tensor == 0 ? view.values.size()
                                                          : std::min(view.values.size(), max_entries_per_tensor);
    for (std::size_t e = 0; e < count; ++e) {
      double& x = view.values[e];
      const double orig = x;
      x = orig + epsilon;
      const double plus = batch_objective(params, batch, config).joint;
      x = orig - epsilon;
      const double minus = batch_objective(params, batch, config).joint;
      x = orig;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(grad_views[k].values[e], numeric, abs_floor));
    }
  }
  return report;
}

}  // namespace promptrec
