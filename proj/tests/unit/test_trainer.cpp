#include <doctest.h>

#include <cmath>
#include <limits>

#include "promptrec/errors.hpp"
#include "promptrec/trainer.hpp"
#include "support.hpp"

using namespace promptrec;
using promptrec::testing::tiny_setup;

namespace {

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 4;
  c.lm.width = 8;
  c.lm.heads = 2;
  c.lm.ff_width = 16;
  c.lm.max_len = 16;
  return c;
}

}  // namespace

TEST_CASE("config defaults") {
  const TrainConfig c;
  CHECK(c.learning_rate == 0.001);
  CHECK(c.batch_size == 128);
  CHECK(c.max_epochs == 50);
  CHECK(c.patience == 5);
  CHECK(c.loss_form == LossForm::kPositive);
  CHECK(c.tasks == TaskSelection::kBoth);
  CHECK_FALSE(c.double_precision);
  CHECK(c.lm.width == 64);
  CHECK(c.lm.layers == 2);
  CHECK(c.lm.heads == 2);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config validation and JSON form") {
  TrainConfig c;
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.max_epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);

  TrainConfig a;
  a.batch_size = 16;
  a.loss_form = LossForm::kKendall;
  a.tasks = TaskSelection::kRating;
  a.lm.width = 32;
  a.corpus_path = "x.tsv";
  TrainConfig b;
  apply_json(to_json(a), b);
  CHECK(to_json(a) == to_json(b));
  CHECK(b.lm.width == 32);

  CHECK_THROWS_AS(apply_json(nlohmann::json{{"learning_rte", 0.1}}, b), ValidationError);
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"loss_form", "bogus"}}, b), ValidationError);
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"batch_size", "big"}}, b), ValidationError);
  CHECK_THROWS_AS(apply_json(nlohmann::json::array(), b), ValidationError);
}

TEST_CASE("early stopping patience arithmetic") {
  EarlyStopping s(5);
  const std::vector<double> losses = {3, 2, 2, 2, 2, 2, 2};
  std::size_t stopped_at = 0;
  for (std::size_t e = 1; e <= losses.size(); ++e) {
    if (s.update(e, losses[e - 1])) {
      stopped_at = e;
      break;
    }
  }
  CHECK(stopped_at == 7);
  CHECK(s.best_epoch() == 2);
  CHECK(s.best_loss() == 2.0);

  EarlyStopping t(2);
  CHECK_FALSE(t.update(1, 5.0));
  CHECK(t.improved());
  CHECK_FALSE(t.update(2, 6.0));
  CHECK_FALSE(t.improved());
  CHECK_FALSE(t.update(3, 4.0));
  CHECK_FALSE(t.update(4, 4.0));
  CHECK(t.update(5, 4.5));
  CHECK(t.best_epoch() == 3);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  std::vector<double> x = {1.0, -2.0, 0.5};
  std::vector<double> g = {0.3, -4.0, 0.0};
  const std::vector<ParamView> params = {{"x", "g", x}};
  const std::vector<ParamView> grads = {{"x", "g", g}};
  Adam adam;
  adam.learning_rate = 0.01;
  adam.step(params, grads);
  CHECK(x[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(x[2] == 0.5);
  CHECK(adam.steps() == 1);
}

TEST_CASE("finite differences of a quadratic are exact up to rounding") {
  const auto f = [](std::span<const double> x) { return 3.0 * x[0] * x[0] - 2.0 * x[0] + 1.0; };
  const std::vector<double> x = {0.7};
  const std::vector<double> analytic = {6.0 * 0.7 - 2.0};
  CHECK(finite_difference_error(f, x, analytic, 1e-3) < 1e-10);
  const std::vector<double> wrong = {analytic[0] * 1.01};
  CHECK(finite_difference_error(f, x, wrong, 1e-3) > 1e-3);
}

TEST_CASE("gradient check of the full joint loss on the tiny model") {
  auto s = tiny_setup();
  CHECK(s.model.params.lm.config.vocab_size == 11);
  const auto report = gradient_check(s.model.params, s.examples, s.config);
  for (const char* group : {"user_embedding", "item_embedding", "word_embedding", "position_embedding", "layer_norm",
                            "attention", "feed_forward", "output_weight", "output_bias", "lambda"}) {
    INFO(group);
    REQUIRE(report.max_relative_error.contains(group));
    CHECK(report.max_relative_error.at(group) < 1e-4);
  }
}

TEST_CASE("gradient check also holds under the kendall form and with a single task") {
  auto s = tiny_setup(6, LossForm::kKendall);
  CHECK(gradient_check(s.model.params, s.examples, s.config, 1e-4, 1e-6, 12).worst() < 1e-4);
  auto r = tiny_setup(7);
  r.config.tasks = TaskSelection::kExplanation;
  CHECK(gradient_check(r.model.params, r.examples, r.config, 1e-4, 1e-6, 12).worst() < 1e-4);
}

TEST_CASE("gradient check requires double precision") {
  auto s = tiny_setup();
  s.config.double_precision = false;
  CHECK_THROWS_AS(gradient_check(s.model.params, s.examples, s.config), ValidationError);
}

TEST_CASE("lambda gradients match the closed form") {
  auto s = tiny_setup();
  Parameters grads = Parameters::zeros_like(s.model.params);
  const auto loss = batch_gradient(s.model.params, s.examples, s.config, grads);
  const JointLoss closed = combine(LossForm::kPositive, loss.loss_s, loss.loss_r, s.model.params.weights);
  CHECK(std::abs(grads.weights.lambda_s - closed.d_lambda_s) < 1e-6);
  CHECK(std::abs(grads.weights.lambda_r - closed.d_lambda_r) < 1e-6);
  CHECK(std::abs(loss.joint - closed.value) < 1e-9);
}

TEST_CASE("the user table receives gradient from both tasks") {
  auto s = tiny_setup();
  const std::size_t u = s.examples.front().user;
  auto grad_row = [&](TaskSelection tasks) {
    TrainConfig c = s.config;
    c.tasks = tasks;
    Parameters g = Parameters::zeros_like(s.model.params);
    batch_gradient(s.model.params, s.examples, c, g);
    return RowVector(g.tables.users.row(static_cast<Eigen::Index>(u)));
  };
  const RowVector from_rating = grad_row(TaskSelection::kRating);
  const RowVector from_text = grad_row(TaskSelection::kExplanation);
  const RowVector both = grad_row(TaskSelection::kBoth);
  CHECK(from_rating.norm() > 0.0);
  CHECK(from_text.norm() > 0.0);
  CHECK((both - from_rating - from_text).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("validate") {
  auto s = tiny_setup();
  CHECK_FALSE(validate(s.model.params, std::span<const TrainingExample>{}, s.config).has_value());
  const auto v = validate(s.model.params, s.examples, s.config);
  REQUIRE(v.has_value());
  CHECK(std::abs(v->joint - batch_objective(s.model.params, s.examples, s.config).joint) < 1e-9);
  const double recombined =
      joint_loss_positive(v->loss_s, v->loss_r, s.model.params.weights.lambda_s, s.model.params.weights.lambda_r);
  CHECK(std::abs(v->joint - recombined) < 1e-9);
}

TEST_CASE("training is deterministic and respects the epoch cap") {
  const Corpus c = promptrec::testing::synthetic_corpus(6, 6, 30, 4);
  const DatasetSplit split = split_dataset(c.records, 1);
  TrainConfig config = quick_config(3);
  std::vector<nlohmann::json> log_a;
  const TrainResult a = train(config, split, c, [&](const EpochRecord& r) { log_a.push_back(to_json(r)); });
  const TrainResult b = train(config, split, c);
  REQUIRE(a.log.size() == 3);
  REQUIRE(log_a.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(to_json(a.log[k]) == to_json(b.log[k]));
  for (const char* key : {"epoch", "train_loss", "val_loss", "L_S", "L_R", "lambda_S", "lambda_R"}) {
    CHECK(log_a[0].contains(key));
  }
  CHECK(a.best_epoch >= 1);
}

TEST_CASE("the returned model is the best-validation epoch") {
  const Corpus c = promptrec::testing::synthetic_corpus(6, 6, 40, 5);
  const DatasetSplit split = split_dataset(c.records, 2);
  REQUIRE_FALSE(split.validation.empty());
  TrainConfig config = quick_config(30);
  config.patience = 2;
  config.learning_rate = 0.05;
  const TrainResult r = train(config, split, c);
  for (const auto& rec : r.log) CHECK(r.best_loss <= *rec.val_loss);
  CHECK(r.log.size() <= std::min(config.max_epochs, r.best_epoch + config.patience));
  const auto val = resolve_examples(c.records, split.validation, r.model);
  CHECK(validate(r.model.params, val, config)->joint == doctest::Approx(r.best_loss).epsilon(1e-12));
}

TEST_CASE("an empty validation set keys early stopping on the training loss") {
  const Corpus c = promptrec::testing::synthetic_corpus(4, 4, 8, 6);
  DatasetSplit split;
  for (std::size_t k = 0; k < c.records.size(); ++k) split.train.push_back(k);
  const TrainResult r = train(quick_config(4), split, c);
  for (const auto& rec : r.log) CHECK_FALSE(rec.val_loss.has_value());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.log) best = std::min(best, rec.train_loss);
  CHECK(r.best_loss == best);
}

TEST_CASE("the fixed form leaves the task weights untouched") {
  const Corpus c = promptrec::testing::synthetic_corpus(4, 4, 10, 7);
  const DatasetSplit split = split_dataset(c.records, 1);
  TrainConfig config = quick_config(3);
  config.loss_form = LossForm::kFixed;
  const TrainResult r = train(config, split, c);
  for (const auto& rec : r.log) {
    CHECK(rec.lambda_s == 1.0);
    CHECK(rec.lambda_r == 1.0);
  }
}

TEST_CASE("single-precision training keeps every parameter float-representable") {
  const Corpus c = promptrec::testing::synthetic_corpus(4, 4, 10, 8);
  const DatasetSplit split = split_dataset(c.records, 1);
  TrainResult r = train(quick_config(2), split, c);
  for (const auto& v : r.model.params.views()) {
    for (double x : v.values) CHECK(static_cast<double>(static_cast<float>(x)) == x);
  }
}

TEST_CASE("a non-finite loss aborts training with a diagnostic") {
  auto s = tiny_setup();
  s.model.params.tables.users(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig config = s.config;
  config.batch_size = 2;
  try {
    train_model(s.model, config, s.examples, {});
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() < 2);
    CHECK(std::string(e.what()).find("batch " + std::to_string(e.batch())) != std::string::npos);
  }
}

TEST_CASE("training with dropout runs and stays finite") {
  const Corpus c = promptrec::testing::synthetic_corpus(4, 4, 10, 9);
  const DatasetSplit split = split_dataset(c.records, 1);
  TrainConfig config = quick_config(2);
  config.lm.dropout = 0.1;
  const TrainResult r = train(config, split, c);
  for (const auto& rec : r.log) CHECK(std::isfinite(rec.train_loss));
}
