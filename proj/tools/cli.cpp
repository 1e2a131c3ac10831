#include "cli.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptrec/checkpoint.hpp"
#include "promptrec/corpus.hpp"
#include "promptrec/decoding.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/metrics.hpp"
#include "promptrec/trainer.hpp"

namespace promptrec::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  SynthConfig config;
  std::string out;
};

struct TrainOptions {
  std::string corpus;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> batch_size;
  std::string out;
  std::string log;
  bool dump_config = false;
};

struct GenerateOptions {
  std::string checkpoint;
  std::string user;
  std::string item;
  std::size_t max_len = kDefaultMaxExplanationLength;
};

struct EvaluateOptions {
  std::string checkpoint;
  std::string corpus;
  std::optional<std::uint64_t> split_seed;
  std::string subset = "test";
  std::size_t max_len = kDefaultMaxExplanationLength;
  std::string report;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  write_synthetic_corpus(o.config, o.out);
  out << "wrote " << o.config.n_records << " records to " << o.out << '\n';
  return kOk;
}

TrainConfig resolve_train_config(const TrainOptions& o) {
  TrainConfig config;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw UsageError("cannot open config file " + o.config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config file " + o.config_path + ": " + e.what());
    }
    apply_json(doc, config);
  }
  if (!o.corpus.empty()) config.corpus_path = o.corpus;
  if (o.seed) config.seed = *o.seed;
  if (o.split_seed) config.split_seed = *o.split_seed;
  if (o.max_epochs) config.max_epochs = *o.max_epochs;
  if (o.batch_size) config.batch_size = *o.batch_size;
  config.validate();
  return config;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  const TrainConfig config = resolve_train_config(o);
  if (o.dump_config) {
    out << to_json(config).dump(2) << '\n';
    return kOk;
  }
  if (config.corpus_path.empty()) throw UsageError("train: --corpus is required");
  if (o.out.empty()) throw UsageError("train: --out is required");

  const Corpus corpus = load_corpus(config.corpus_path);
  if (corpus.records.empty()) throw ValidationError("corpus " + config.corpus_path + " has no records");
  const DatasetSplit split = split_dataset(corpus.records, config.split_seed);

  const std::string log_path = o.log.empty() ? o.out + ".log.jsonl" : o.log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw UsageError("cannot open log file " + log_path);

  const TrainResult result = train(config, split, corpus, [&](const EpochRecord& rec) {
    log << to_json(rec).dump() << '\n';
    log.flush();
  });

  Checkpoint cp;
  cp.config = config;
  cp.model = result.model;
  cp.epoch = result.best_epoch;
  if (!split.validation.empty()) cp.best_val_loss = result.best_loss;
  save_checkpoint(cp, o.out);

  out << "trained " << result.log.size() << " epochs (best epoch " << result.best_epoch << ", loss "
      << result.best_loss << "); checkpoint " << o.out << ", log " << log_path << '\n';
  return kOk;
}

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  if (!cp.model.ids.users.contains(o.user)) throw NotFoundError("unknown user id '" + o.user + "'");
  if (!cp.model.ids.items.contains(o.item)) throw NotFoundError("unknown item id '" + o.item + "'");
  const Words words = generate_explanation(cp.model.ids.users.at(o.user), cp.model.ids.items.at(o.item), cp.model,
                                           {o.max_len, DecodeStrategy::kGreedy});
  out << join_words(words) << '\n';
  return kOk;
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(o.corpus);
  const Vocabulary vocab = build_vocabulary(corpus.records, cp.config.min_count);
  if (vocab.hash() != cp.model.vocab.hash()) {
    throw CompatibilityError("corpus " + o.corpus + " does not match the checkpoint vocabulary (hash " +
                             std::to_string(vocab.hash()) + " vs " + std::to_string(cp.model.vocab.hash()) + ")");
  }

  const DatasetSplit split = split_dataset(corpus.records, o.split_seed.value_or(cp.config.split_seed));
  std::vector<std::size_t> indices;
  if (o.subset == "test") indices = split.test;
  else if (o.subset == "validation") indices = split.validation;
  else if (o.subset == "train") indices = split.train;
  else for (std::size_t k = 0; k < corpus.records.size(); ++k) indices.push_back(k);

  std::vector<InteractionRecord> records;
  records.reserve(indices.size());
  for (std::size_t idx : indices) records.push_back(corpus.records[idx]);
  if (records.size() < 2) throw ValidationError("evaluation subset '" + o.subset + "' has fewer than 2 records");

  const Evaluation ev = evaluate(cp.model, records, corpus.features, o.max_len);
  print_report_table(out, ev.report);

  const std::string report_path = o.report.empty() ? o.checkpoint + ".report.json" : o.report;
  std::ofstream report(report_path, std::ios::trunc);
  if (!report) throw UsageError("cannot open report file " + report_path);
  nlohmann::json doc = to_json(ev.report);
  doc["subset"] = o.subset;
  report << doc.dump(2) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explainable recommendation with ID-embedding prompts and matrix factorization"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus");
  synth_cmd->add_option("--users", synth.config.n_users, "number of users")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--items", synth.config.n_items, "number of items")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--records", synth.config.n_records, "number of records")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--rank", synth.config.latent_rank, "latent rank")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.config.noise_sd, "rating noise sd")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--spread", synth.config.latent_spread, "latent spread")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.config.seed, "random seed");
  synth_cmd->add_option("--out", synth.out, "output corpus path")->required();

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its best checkpoint");
  train_cmd->add_option("--corpus", train_opts.corpus, "corpus file");
  train_cmd->add_option("--config", train_opts.config_path, "flat JSON config; flags override it");
  train_cmd->add_option("--seed", train_opts.seed, "training seed");
  train_cmd->add_option("--split-seed", train_opts.split_seed, "dataset split seed");
  train_cmd->add_option("--max-epochs", train_opts.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train_opts.batch_size, "batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", train_opts.out, "checkpoint path");
  train_cmd->add_option("--log", train_opts.log, "epoch log path (default <out>.log.jsonl)");
  train_cmd->add_flag("--dump-config", train_opts.dump_config, "print the effective config and exit");

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate an explanation for one user/item pair");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "checkpoint path")->required();
  gen_cmd->add_option("--user", gen.user, "user id")->required();
  gen_cmd->add_option("--item", gen.item, "item id")->required();
  gen_cmd->add_option("--max-len", gen.max_len, "maximum words")->check(CLI::PositiveNumber);

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Generate for a split and print the metric table");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "corpus file")->required();
  eval_cmd->add_option("--split-seed", eval.split_seed, "split seed (default: the training split seed)");
  eval_cmd->add_option("--subset", eval.subset, "records to evaluate")
      ->check(CLI::IsMember({"test", "validation", "train", "all"}));
  eval_cmd->add_option("--max-len", eval.max_len, "maximum words")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report", eval.report, "JSON report path (default <checkpoint>.report.json)");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(train_opts, out);
    if (*gen_cmd) return cmd_generate(gen, out);
    if (*eval_cmd) return cmd_evaluate(eval, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << '\n';
    return kRuntime;
  } catch (const CompatibilityError& e) {
    err << "compatibility error: " << e.what() << '\n';
    return kValidation;
  } catch (const NotFoundError& e) {
    err << "not found: " << e.what() << '\n';
    return kValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << '\n';
    return kValidation;
  } catch (const UnsupportedVersionError& e) {
    err << "unsupported version: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace promptrec::cli
