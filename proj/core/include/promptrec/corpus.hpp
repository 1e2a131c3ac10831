#pragma once

// Interaction corpus: records, vocabulary, dataset splits and a synthetic
// generator.
//
// File format (UTF-8, one record per line, '#' starts a comment line):
//
//   user_id <TAB> item_id <TAB> rating <TAB> explanation words <TAB> feature,words
//
// Explanations and features are lowercased on load. Every feature word must
// occur in its record's explanation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptrec {

using Words = std::vector<std::string>;
using FeatureSet = std::set<std::string>;
using TokenIds = std::vector<int>;

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  Words explanation;
  FeatureSet features;
};

struct Corpus {
  std::vector<InteractionRecord> records;
  /// Union of every record's feature set.
  FeatureSet features;
};

/// Splits on runs of whitespace and lowercases ASCII letters.
Words split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

/// Parses the corpus format; ParseError carries the offending line number.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const InteractionRecord> records);

/// Dense string-id to index map in first-appearance order.
class IdIndex {
 public:
  IdIndex() = default;
  explicit IdIndex(std::vector<std::string> ids);

  /// Inserts if absent; returns the index.
  std::size_t add(const std::string& id);
  /// Throws NotFoundError for unknown ids.
  std::size_t at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct IdTables {
  IdIndex users;
  IdIndex items;
};

IdTables index_ids(std::span<const InteractionRecord> records);

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  static constexpr std::string_view kBosWord = "<bos>";
  static constexpr std::string_view kEosWord = "<eos>";
  static constexpr std::string_view kPadWord = "<pad>";
  static constexpr std::string_view kUnkWord = "<unk>";

  /// Specials only.
  Vocabulary();
  /// `words` are the non-special words in index order starting at kNumSpecials.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const noexcept { return words_.size(); }
  /// kUnk for out-of-vocabulary words.
  int index_of(std::string_view word) const;
  /// Throws std::out_of_range when index is outside [0, size()).
  const std::string& word(int index) const;
  bool contains(std::string_view word) const;
  static bool is_special(int index) noexcept { return index >= 0 && index < kNumSpecials; }

  /// Non-special words in index order.
  std::vector<std::string> regular_words() const;
  /// FNV-1a over all words in index order; used for checkpoint compatibility checks.
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Words with corpus frequency >= min_count, ordered by frequency (descending)
/// then lexicographically.
Vocabulary build_vocabulary(std::span<const InteractionRecord> records, std::size_t min_count = 1);

TokenIds tokenize(std::span<const std::string> words, const Vocabulary& vocab);
Words detokenize(std::span<const int> ids, const Vocabulary& vocab);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// 8:1:1 random split. Records that first cover a user or item (in a seeded
/// order) are pinned to train before the shuffle, so every user and item has
/// at least one training record. Index lists are sorted ascending.
DatasetSplit split_dataset(std::span<const InteractionRecord> records, std::uint64_t seed);

struct SynthConfig {
  std::size_t n_users = 50;
  std::size_t n_items = 50;
  std::size_t n_records = 500;
  std::size_t latent_rank = 4;
  double noise_sd = 0.1;
  /// Per-component spread of the latent vectors around their common mean;
  /// 0 makes every latent vector identical.
  double latent_spread = 0.35;
  std::uint64_t seed = 1;
};

/// Ratings are clamp(<p_u, q_i> + noise, 1, 5) for rank-`latent_rank` latents
/// whose mean dot product is 3. Explanations come from sentence templates
/// selected by user style and rating, mentioning one of the item's features.
std::vector<InteractionRecord> generate_synthetic_records(const SynthConfig& config);
void write_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& out);

/// Every feature word the synthetic generator can assign to an item.
std::span<const std::string_view> synthetic_feature_pool();

}  // namespace promptrec
