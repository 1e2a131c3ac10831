#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "promptrec/corpus.hpp"
#include "promptrec/model.hpp"
#include "promptrec/trainer.hpp"

namespace promptrec::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("promptrec_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline Corpus make_corpus(std::vector<InteractionRecord> records) {
  Corpus c;
  c.records = std::move(records);
  for (const auto& r : c.records) c.features.insert(r.features.begin(), r.features.end());
  return c;
}

inline Corpus synthetic_corpus(std::size_t users, std::size_t items, std::size_t records, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_users = users;
  sc.n_items = items;
  sc.n_records = records;
  sc.seed = seed;
  return make_corpus(generate_synthetic_records(sc));
}

/// 2 layers, d = 8, 2 heads, |V| = 11 (7 regular words), double precision.
struct TinySetup {
  Corpus corpus;
  Model model;
  std::vector<TrainingExample> examples;
  TrainConfig config;
};

inline TinySetup tiny_setup(std::uint64_t seed = 5, LossForm form = LossForm::kPositive) {
  TinySetup s;
  s.corpus = synthetic_corpus(3, 3, 4, 3);
  const Vocabulary full = build_vocabulary(s.corpus.records, 1);
  std::vector<std::string> words;
  for (const auto& w : full.regular_words()) {
    if (words.size() < 7) words.push_back(w);
  }
  LmConfig lm;
  lm.width = 8;
  lm.layers = 2;
  lm.heads = 2;
  lm.ff_width = 16;
  lm.max_len = 12;
  s.model = Model::initialize(Vocabulary(words), index_ids(s.corpus.records), lm, seed, false);
  s.model.params.weights = {0.8, 1.3};
  s.examples = resolve_examples(s.corpus.records, s.model);
  s.config.double_precision = true;
  s.config.loss_form = form;
  s.config.lm = s.model.params.lm.config;
  return s;
}

}  // namespace promptrec::testing
