#pragma once

// Joint training of the rating head and the prompted language model.
//
// Each step minimizes the configured combination (mtl.hpp) of the batch
// explanation loss and the batch rating loss over all parameters, the task
// weights included, with Adam. Early stopping keys on the validation joint
// loss (training loss when the validation set is empty) and returns the
// parameters of the best epoch.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptrec/corpus.hpp"
#include "promptrec/model.hpp"
#include "promptrec/mtl.hpp"

namespace promptrec {

enum class TaskSelection { kBoth, kRating, kExplanation };

std::string_view to_string(TaskSelection tasks);
std::optional<TaskSelection> parse_task_selection(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  LossForm loss_form = LossForm::kPositive;
  TaskSelection tasks = TaskSelection::kBoth;
  /// Multiplies L_R before it enters the combination; 1 in normal use.
  double rating_loss_scale = 1.0;
  /// Parameters are rounded to float after every step unless set.
  bool double_precision = false;
  std::size_t min_count = 1;
  LmConfig lm;
  std::string corpus_path;

  /// Throws ValidationError on out-of-range values.
  void validate() const;
};

/// Flat key-value form used by config files and checkpoints.
nlohmann::json to_json(const TrainConfig& config);
/// Keys absent from `doc` keep their current value in `config`; unknown keys are rejected.
void apply_json(const nlohmann::json& doc, TrainConfig& config);

struct Adam {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// One update of every view in `params` from the aligned `grads` views.
  void step(std::span<const ParamView> params, std::span<const ParamView> grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Patience-based stopping on a loss that must strictly decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Records the loss of `epoch`; true when training should stop.
  bool update(std::size_t epoch, double loss);
  bool improved() const noexcept { return improved_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  bool improved_ = false;
};

struct LossBreakdown {
  double joint = 0.0;
  double loss_s = 0.0;
  double loss_r = 0.0;
};

/// Joint objective of a batch without gradients. Disabled tasks contribute nothing.
LossBreakdown batch_objective(const Parameters& params, std::span<const TrainingExample> batch,
                              const TrainConfig& config);

/// Accumulates the gradient of batch_objective into `grads`. `dropout` may be null.
LossBreakdown batch_gradient(const Parameters& params, std::span<const TrainingExample> batch,
                             const TrainConfig& config, Parameters& grads, Dropout* dropout = nullptr);

/// nullopt for an empty validation set.
std::optional<LossBreakdown> validate(const Parameters& params, std::span<const TrainingExample> validation,
                                      const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double loss_s = 0.0;
  double loss_r = 0.0;
  double lambda_s = 1.0;
  double lambda_r = 1.0;
};

nlohmann::json to_json(const EpochRecord& record);

struct TrainResult {
  Model model;  ///< parameters of the best epoch
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  /// Early-stopping key at the best epoch (validation joint loss when available).
  double best_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains a fresh model whose vocabulary and id tables cover the whole corpus.
/// Throws TrainingAborted on a non-finite batch loss.
TrainResult train(const TrainConfig& config, const DatasetSplit& split, const Corpus& corpus,
                  const EpochCallback& on_epoch = {});

/// Same loop from an existing model and pre-resolved examples.
TrainResult train_model(Model model, const TrainConfig& config, std::span<const TrainingExample> train_set,
                        std::span<const TrainingExample> validation_set, const EpochCallback& on_epoch = {});

struct GradientCheckReport {
  /// Largest per-entry relative error per parameter group.
  std::map<std::string, double> max_relative_error;
  double worst() const;
};

/// Central finite differences (f(x+eps) - f(x-eps)) / 2eps against the
/// analytic gradient, for every entry of every parameter (or the first
/// `max_entries_per_tensor` entries of each tensor when nonzero). Relative
/// error is |a - n| / max(|a|, |n|, abs_floor). Requires double_precision.
GradientCheckReport gradient_check(Parameters& params, std::span<const TrainingExample> batch,
                                   const TrainConfig& config, double epsilon = 1e-4, double abs_floor = 1e-6,
                                   std::size_t max_entries_per_tensor = 0);

/// Same comparison for an arbitrary scalar function of a vector.
double finite_difference_error(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic, double epsilon,
                               double abs_floor = 1e-6);

}  // namespace promptrec
