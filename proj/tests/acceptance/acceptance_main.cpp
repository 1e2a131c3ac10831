// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 4 9        run only criteria 4 and 9

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "metric_oracles.hpp"
#include "promptrec/checkpoint.hpp"
#include "promptrec/corpus.hpp"
#include "promptrec/decoding.hpp"
#include "promptrec/metrics.hpp"
#include "promptrec/mtl.hpp"
#include "promptrec/rec_head.hpp"
#include "promptrec/trainer.hpp"
#include "support.hpp"

using namespace promptrec;
using namespace promptrec::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED " + what;
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// 1: explainability metrics against brute-force oracles, text metrics against hand counts.
Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(20240601);
  std::size_t mismatches = 0;
  double worst_div = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RandomMetricCorpus c = random_metric_corpus(rng);
    const FeatureSet fset(c.features.begin(), c.features.end());
    std::vector<Words> generated;
    std::vector<FeatureSet> found;
    for (auto& s : c.samples) {
      s.features = extract_features(s.generated, fset);
      mismatches += s.features != oracle_features(s.generated, c.features);
      generated.push_back(s.generated);
      found.push_back(s.features);
    }
    mismatches += usr(generated) != oracle_usr(generated);
    mismatches += fcr(c.samples, fset) != oracle_fcr(found, c.features);
    worst_div = std::max(worst_div, std::abs(div(c.samples) - oracle_div(found)));
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " USR/FCR/feature mismatches");
  o.require(worst_div <= 1e-12, "DIV error " + fmt("%.3g", worst_div));

  double worst_text = 0.0;
  for (const auto& toy : toy_corpora()) {
    const RougeScore r1 = rouge_n(toy.samples, 1);
    const RougeScore r2 = rouge_n(toy.samples, 2);
    for (const auto& [got, want] : std::vector<std::pair<double, double>>{
             {bleu_n(toy.samples, 1), toy.bleu1},
             {bleu_n(toy.samples, 4), toy.bleu4},
             {r1.precision, toy.rouge1.precision},
             {r1.recall, toy.rouge1.recall},
             {r1.f1, toy.rouge1.f1},
             {r2.precision, toy.rouge2.precision},
             {r2.recall, toy.rouge2.recall},
             {r2.f1, toy.rouge2.f1}}) {
      worst_text = std::max(worst_text, std::abs(got - want));
    }
  }
  o.require(worst_text <= 1e-9, "BLEU/ROUGE error " + fmt("%.3g", worst_text));
  o.note("100 random corpora, 5 toy corpora, max DIV err " + fmt("%.2g", worst_div) + ", max text err " +
         fmt("%.2g", worst_text));
  return o;
}

// 2: the positive form is nonnegative on a 100 x 100 grid; the kendall form is not.
Outcome loss_positivity() {
  Outcome o;
  std::vector<double> lambdas;
  for (int k = 0; k < 50; ++k) {
    const double mag = std::pow(10.0, -3.0 + 6.0 * k / 49.0);
    lambdas.push_back(mag);
    lambdas.push_back(-mag);
  }
  std::size_t points = 0;
  std::size_t negative_positive_form = 0;
  std::size_t pathological = 0;
  double min_positive_form = INFINITY;
  for (double lambda : lambdas) {
    for (int l = 0; l < 100; ++l) {
      const double loss = 10.0 * l / 99.0;
      const double positive = joint_loss_positive(loss, loss, lambda, lambda);
      min_positive_form = std::min(min_positive_form, positive);
      negative_positive_form += positive < 0.0;
      if (lambda > 0.0 && joint_loss_kendall(loss, loss, lambda, lambda) < 0.0 && positive >= 0.0) ++pathological;
      ++points;
    }
  }
  o.require(points == 10000, "grid size " + std::to_string(points));
  o.require(negative_positive_form == 0, std::to_string(negative_positive_form) + " negative grid values");
  o.require(pathological >= 1, "no point where the kendall form is negative");
  o.note(std::to_string(points) + " points, min value " + fmt("%.3g", min_positive_form) + ", " +
         std::to_string(pathological) + " points with kendall < 0 <= positive");
  return o;
}

// 3: finite differences of the full joint loss on a tiny model.
Outcome gradient_correctness() {
  Outcome o;
  auto s = tiny_setup();
  o.require(s.model.params.lm.config.vocab_size == 11, "|V| != 11");
  const auto report = gradient_check(s.model.params, s.examples, s.config);
  std::string groups;
  for (const auto& [group, err] : report.max_relative_error) {
    o.require(err < 1e-4, group + " relative error " + fmt("%.3g", err));
    groups += (groups.empty() ? "" : " ") + group + "=" + fmt("%.1e", err);
  }
  o.require(report.max_relative_error.contains("lambda"), "lambda group missing");
  o.require(report.max_relative_error.size() == 10, "expected 10 parameter groups");
  o.note(groups);
  return o;
}

// 4: the default model memorizes a 20-record corpus.
Outcome memorization() {
  Outcome o;
  const Corpus c = synthetic_corpus(10, 10, 20, 11);
  DatasetSplit split;
  for (std::size_t k = 0; k < c.records.size(); ++k) split.train.push_back(k);
  TrainConfig config;
  config.batch_size = 4;
  config.max_epochs = 150;
  config.patience = config.max_epochs;
  const TrainResult r = train(config, split, c);

  const auto examples = resolve_examples(c.records, r.model);
  double nll_sum = 0.0;
  double tokens = 0.0;
  for (const auto& ex : examples) {
    const auto& lm = r.model.params.lm;
    const PromptSequence p =
        assemble_prompt(ex.user, ex.item, ex.explanation, r.model.params.tables, lm.word_embedding,
                        lm.position_embedding);
    nll_sum += record_nll(p, lm) * static_cast<double>(p.targets.size());
    tokens += static_cast<double>(p.targets.size());
  }
  const double per_token = nll_sum / tokens;

  const Evaluation ev = evaluate(r.model, c.records, c.features, kDefaultMaxExplanationLength);
  std::size_t exact = 0;
  for (const auto& s : ev.samples) exact += s.generated == s.reference;
  const double exact_rate = static_cast<double>(exact) / static_cast<double>(ev.samples.size());

  o.require(r.log.size() <= 500, "more than 500 epochs");
  o.require(per_token <= 0.1, "per-token NLL " + fmt("%.4f", per_token));
  o.require(exact_rate >= 0.9, "exact reproduction " + fmt("%.2f", exact_rate));
  o.require(ev.report.bleu1 >= 95.0, "BLEU-1 " + fmt("%.2f", ev.report.bleu1));
  o.note(std::to_string(r.log.size()) + " epochs, per-token NLL " + fmt("%.4f", per_token) + ", exact " +
         std::to_string(exact) + "/20, BLEU-1 " + fmt("%.2f", ev.report.bleu1));
  return o;
}

// 5: rating-only training recovers a rank-4 rating matrix.
Outcome mf_convergence() {
  Outcome o;
  SynthConfig sc;
  sc.n_users = 100;
  sc.n_items = 100;
  sc.n_records = 2000;
  sc.latent_rank = 4;
  sc.noise_sd = 0.1;
  sc.latent_spread = 0.2;
  sc.seed = 1;
  const Corpus c = make_corpus(generate_synthetic_records(sc));
  const DatasetSplit split = split_dataset(c.records, 1);

  TrainConfig config;
  config.tasks = TaskSelection::kRating;
  config.loss_form = LossForm::kFixed;
  config.max_epochs = 200;
  config.lm.width = sc.latent_rank;
  config.lm.heads = 1;
  const TrainResult r = train(config, split, c);

  std::vector<RatingExample> test;
  double train_mean = 0.0;
  for (std::size_t idx : split.train) train_mean += c.records[idx].rating;
  train_mean /= static_cast<double>(split.train.size());
  double baseline = 0.0;
  for (std::size_t idx : split.test) {
    const auto& rec = c.records[idx];
    test.push_back({r.model.ids.users.at(rec.user_id), r.model.ids.items.at(rec.item_id), rec.rating});
    baseline += (rec.rating - train_mean) * (rec.rating - train_mean);
  }
  baseline = std::sqrt(baseline / static_cast<double>(test.size()));
  const double rmse = rating_rmse(test, r.model.params.tables);

  o.require(r.log.size() <= 200, "more than 200 epochs");
  o.require(rmse <= 0.15, "held-out RMSE " + fmt("%.4f", rmse));
  o.require(baseline > 3.0 * 0.15, "global-mean baseline RMSE " + fmt("%.4f", baseline) + " is too easy");
  o.note(std::to_string(r.log.size()) + " epochs (best " + std::to_string(r.best_epoch) + "), test RMSE " +
         fmt("%.4f", rmse) + " vs global-mean " + fmt("%.4f", baseline) + " on " + std::to_string(test.size()) +
         " held-out ratings");
  return o;
}

// 6: the uncertainty weight of the inflated task grows past the other one.
Outcome weight_adaptation() {
  Outcome o;
  const Corpus c = synthetic_corpus(20, 20, 300, 6);
  const DatasetSplit split = split_dataset(c.records, 1);
  double sum_s = 0.0;
  double sum_r = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig config;
    config.seed = seed;
    config.rating_loss_scale = 100.0;
    config.batch_size = 16;
    config.max_epochs = 30;
    config.lm.width = 16;
    config.lm.ff_width = 64;
    const TrainResult r = train(config, split, c);
    const auto& w = r.model.params.weights;
    sum_s += w.lambda_s;
    sum_r += w.lambda_r;
    per_seed += (per_seed.empty() ? "" : ", ") + fmt("%.3f", w.lambda_r) + "/" + fmt("%.3f", w.lambda_s);
  }
  const double mean_s = sum_s / 3.0;
  const double mean_r = sum_r / 3.0;
  o.require(mean_r > mean_s, "mean lambda_R " + fmt("%.4f", mean_r) + " <= lambda_S " + fmt("%.4f", mean_s));
  o.note("lambda_R/lambda_S per seed " + per_seed + "; means " + fmt("%.3f", mean_r) + " > " + fmt("%.3f", mean_s));
  return o;
}

// 7: 8:1:1 splits with every user and item in train.
Outcome split_protocol() {
  Outcome o;
  const Corpus c = make_corpus(generate_synthetic_records(SynthConfig{}));
  const std::size_t n = c.records.size();
  const auto tenth = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0));
  std::set<std::string> users;
  std::set<std::string> items;
  for (const auto& r : c.records) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DatasetSplit s = split_dataset(c.records, seed);
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    o.require(s.validation.size() == tenth && s.test.size() == tenth && s.train.size() == n - 2 * tenth,
              tag + "sizes " + std::to_string(s.train.size()) + "/" + std::to_string(s.validation.size()) + "/" +
                  std::to_string(s.test.size()));
    std::vector<int> seen(n, 0);
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (std::size_t idx : *part) ++seen[idx];
    o.require(std::all_of(seen.begin(), seen.end(), [](int k) { return k == 1; }), tag + "not a partition");
    std::set<std::string> tu;
    std::set<std::string> ti;
    for (std::size_t idx : s.train) {
      tu.insert(c.records[idx].user_id);
      ti.insert(c.records[idx].item_id);
    }
    o.require(tu == users && ti == items, tag + "a user or item is missing from train");
  }
  o.note("500 records, seeds 1-5: " + std::to_string(n - 2 * tenth) + "/" + std::to_string(tenth) + "/" +
         std::to_string(tenth) + ", full coverage");
  return o;
}

// 8: save -> load is bit-exact and generates identically.
Outcome checkpoint_round_trip() {
  Outcome o;
  TempDir dir("acceptance_ckpt");
  const Corpus c = synthetic_corpus(10, 10, 60, 8);
  const DatasetSplit split = split_dataset(c.records, 1);
  TrainConfig config;
  config.max_epochs = 1;
  config.batch_size = 16;
  const TrainResult r = train(config, split, c);

  Checkpoint cp;
  cp.config = config;
  cp.model = r.model;
  cp.epoch = r.best_epoch;
  cp.best_val_loss = r.best_loss;
  save_checkpoint(cp, dir / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  o.require(identical(cp, back), "loaded checkpoint differs");

  std::mt19937_64 rng(8);
  std::size_t same = 0;
  for (int k = 0; k < 10; ++k) {
    const std::size_t u = rng() % cp.model.ids.users.size();
    const std::size_t i = rng() % cp.model.ids.items.size();
    same += generate_explanation(u, i, cp.model) == generate_explanation(u, i, back.model);
  }
  o.require(same == 10, std::to_string(10 - same) + " generations differ");
  o.note("bit-exact tensors, " + std::to_string(same) + "/10 identical generations");
  return o;
}

// 9: synth -> train -> evaluate through the command-line front end.
Outcome end_to_end() {
  Outcome o;
  TempDir dir("acceptance_e2e");
  const std::string corpus = (dir / "corpus.tsv").string();
  const std::string ckpt = (dir / "model.ckpt").string();
  const std::string report = (dir / "report.json").string();
  const auto run = [](std::vector<std::string> args, std::string& out) {
    args.insert(args.begin(), "promptrec");
    std::ostringstream so;
    std::ostringstream se;
    const int code = cli::run(args, so, se);
    out = so.str() + se.str();
    return code;
  };
  std::string out;
  int code = run({"synth", "--seed", "9", "--out", corpus}, out);
  o.require(code == 0, "synth exit " + std::to_string(code) + ": " + out);
  write_file(dir / "config.json", R"({"batch_size": 16, "max_epochs": 50, "patience": 5})");
  code = run({"train", "--corpus", corpus, "--config", (dir / "config.json").string(), "--out", ckpt}, out);
  o.require(code == 0, "train exit " + std::to_string(code) + ": " + out);
  const std::string log = read_file(ckpt + ".log.jsonl");
  const auto epochs = static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n'));
  code = run({"evaluate", "--checkpoint", ckpt, "--corpus", corpus, "--report", report}, out);
  o.require(code == 0, "evaluate exit " + std::to_string(code) + ": " + out);
  if (!o.pass) return o;

  std::istringstream table(out);
  std::string header;
  std::getline(table, header);
  std::istringstream hs(header);
  std::vector<std::string> columns;
  for (std::string w; hs >> w;) columns.push_back(w);
  const std::vector<std::string> expected = {"DIV",    "USR",    "FCR",   "BLEU-1", "BLEU-4", "R1-Pre",
                                             "R1-Rec", "R1-F1",  "R2-Pre", "R2-Rec", "R2-F1"};
  o.require(columns == expected, "table columns '" + header + "'");

  const auto j = nlohmann::json::parse(read_file(report));
  const double usr_v = j.at("USR").get<double>();
  const double fcr_v = j.at("FCR").get<double>();
  const double div_v = j.at("DIV").get<double>();
  o.require(usr_v > 0.0 && usr_v <= 1.0, "USR " + fmt("%.4f", usr_v));
  o.require(fcr_v >= 0.0 && fcr_v <= 1.0, "FCR " + fmt("%.4f", fcr_v));
  o.require(div_v >= 0.0, "DIV " + fmt("%.4f", div_v));
  for (const char* key : {"BLEU-1", "BLEU-4", "R1-Pre", "R1-Rec", "R1-F1", "R2-Pre", "R2-Rec", "R2-F1"}) {
    const double v = j.at(key).get<double>();
    o.require(v >= 0.0 && v <= 100.0, std::string(key) + " " + fmt("%.4f", v));
  }
  o.require(epochs >= 1 && epochs <= 50, "epoch count " + std::to_string(epochs));
  o.note(std::to_string(epochs) + " epochs; DIV " + fmt("%.2f", div_v) + " USR " + fmt("%.2f", usr_v) + " FCR " +
         fmt("%.2f", fcr_v) + " BLEU-1 " + fmt("%.2f", j.at("BLEU-1").get<double>()) + " BLEU-4 " +
         fmt("%.2f", j.at("BLEU-4").get<double>()));
  return o;
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "metric-oracle equivalence", 10.0, metric_oracles},
      {2, "loss positivity and pathology", 1.0, loss_positivity},
      {3, "gradient correctness", 120.0, gradient_correctness},
      {4, "memorization run", 300.0, memorization},
      {5, "MF convergence", 120.0, mf_convergence},
      {6, "uncertainty-weight adaptation", 120.0, weight_adaptation},
      {7, "split protocol", 1.0, split_protocol},
      {8, "checkpoint round-trip", 5.0, checkpoint_round_trip},
      {9, "end-to-end smoke", 600.0, end_to_end},
  };
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::stoi(argv[k]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs <= c.limit_seconds, "runtime " + fmt("%.1f", secs) + " s over " + fmt("%.0f", c.limit_seconds) + " s");
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << " ("
              << fmt("%.2f", secs) << " s) - " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
