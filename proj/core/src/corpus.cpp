#include "promptrec/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= s.size(); ++k) {
    if (k == s.size() || s[k] == sep) {
      parts.push_back(s.substr(start, k - start));
      start = k + 1;
    }
  }
  return parts;
}

InteractionRecord parse_line(std::string_view line, std::size_t line_no) {
  const auto fields = split_on(line, '\t');
  if (fields.size() != 5) {
    throw ParseError(line_no, "expected 5 tab-separated fields, found " + std::to_string(fields.size()));
  }
  InteractionRecord rec;
  rec.user_id = std::string(trim(fields[0]));
  rec.item_id = std::string(trim(fields[1]));
  if (rec.user_id.empty() || rec.item_id.empty()) throw ParseError(line_no, "empty user or item id");

  const std::string_view rating_text = trim(fields[2]);
  const auto [ptr, ec] = std::from_chars(rating_text.data(), rating_text.data() + rating_text.size(), rec.rating);
  if (ec != std::errc{} || ptr != rating_text.data() + rating_text.size()) {
    throw ParseError(line_no, "rating is not a decimal number: '" + std::string(rating_text) + "'");
  }
  if (!(rec.rating >= 1.0 && rec.rating <= 5.0)) {
    throw ValidationError("line " + std::to_string(line_no) + ": rating " + std::string(rating_text) +
                          " outside [1,5]");
  }

  rec.explanation = split_words(fields[3]);
  if (rec.explanation.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty explanation");

  for (std::string_view f : split_on(fields[4], ',')) {
    f = trim(f);
    if (!f.empty()) rec.features.insert(lowercase(f));
  }
  if (rec.features.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty feature set");
  for (const auto& f : rec.features) {
    if (std::find(rec.explanation.begin(), rec.explanation.end(), f) == rec.explanation.end()) {
      throw ValidationError("line " + std::to_string(line_no) + ": feature '" + f +
                            "' does not occur in the explanation");
    }
  }
  return rec;
}

std::string format_rating(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", r);
  return buf;
}

}  // namespace

Words split_words(std::string_view text) {
  Words out;
  std::size_t k = 0;
  while (k < text.size()) {
    while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    const std::size_t start = k;
    while (k < text.size() && !std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k > start) out.push_back(lowercase(text.substr(start, k - start)));
  }
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (k) out += ' ';
    out += words[k];
  }
  return out;
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    corpus.records.push_back(parse_line(line, line_no));
    corpus.features.insert(corpus.records.back().features.begin(), corpus.records.back().features.end());
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const InteractionRecord> records) {
  for (const auto& r : records) {
    out << r.user_id << '\t' << r.item_id << '\t' << format_rating(r.rating) << '\t' << join_words(r.explanation)
        << '\t';
    bool first = true;
    for (const auto& f : r.features) {
      if (!first) out << ',';
      out << f;
      first = false;
    }
    out << '\n';
  }
}

// IdIndex

IdIndex::IdIndex(std::vector<std::string> ids) {
  for (auto& id : ids) add(id);
}

std::size_t IdIndex::add(const std::string& id) {
  const auto [it, inserted] = index_.try_emplace(id, ids_.size());
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::size_t IdIndex::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw NotFoundError("unknown id '" + id + "'");
  return it->second;
}

IdTables index_ids(std::span<const InteractionRecord> records) {
  IdTables t;
  for (const auto& r : records) {
    t.users.add(r.user_id);
    t.items.add(r.item_id);
  }
  return t;
}

// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_ = {std::string(kBosWord), std::string(kEosWord), std::string(kPadWord), std::string(kUnkWord)};
  words_.insert(words_.end(), std::make_move_iterator(words.begin()), std::make_move_iterator(words.end()));
  for (std::size_t k = 0; k < words_.size(); ++k) {
    if (!index_.try_emplace(words_[k], static_cast<int>(k)).second) {
      throw ValidationError("duplicate vocabulary word '" + words_[k] + "'");
    }
  }
}

int Vocabulary::index_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= words_.size()) {
    throw std::out_of_range("token index " + std::to_string(index) + " outside vocabulary of size " +
                            std::to_string(words_.size()));
  }
  return words_[static_cast<std::size_t>(index)];
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(std::string(word)); }

std::vector<std::string> Vocabulary::regular_words() const {
  return {words_.begin() + kNumSpecials, words_.end()};
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& w : words_) {
    for (char c : w) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

Vocabulary build_vocabulary(std::span<const InteractionRecord> records, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    for (const auto& w : r.explanation) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(std::move(w));
  return Vocabulary(std::move(words));
}

TokenIds tokenize(std::span<const std::string> words, const Vocabulary& vocab) {
  TokenIds ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.index_of(w));
  return ids;
}

Words detokenize(std::span<const int> ids, const Vocabulary& vocab) {
  Words words;
  words.reserve(ids.size());
  for (int id : ids) words.push_back(vocab.word(id));
  return words;
}

// Split

DatasetSplit split_dataset(std::span<const InteractionRecord> records, std::uint64_t seed) {
  const std::size_t n = records.size();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::set<std::string_view> users_seen;
  std::set<std::string_view> items_seen;
  std::vector<std::size_t> pinned;
  std::vector<std::size_t> free;
  for (std::size_t idx : order) {
    const bool new_user = users_seen.insert(records[idx].user_id).second;
    const bool new_item = items_seen.insert(records[idx].item_id).second;
    (new_user || new_item ? pinned : free).push_back(idx);
  }

  const auto tenth = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0));
  const std::size_t n_val = std::min(tenth, free.size());
  const std::size_t n_test = std::min(tenth, free.size() - n_val);

  DatasetSplit split;
  split.seed = seed;
  split.validation.assign(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.test.assign(free.begin() + static_cast<std::ptrdiff_t>(n_val),
                    free.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  split.train = std::move(pinned);
  split.train.insert(split.train.end(), free.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), free.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// Synthetic corpus

namespace {

constexpr std::array<std::string_view, 24> kFeaturePool = {
    "gym",    "pool",     "subway",  "breakfast", "bathroom", "staff",  "location", "bed",
    "view",   "parking",  "lobby",   "wifi",      "coffee",   "pizza",  "service",  "price",
    "music",  "patio",    "dessert", "bar",       "sushi",    "noodles", "balcony", "shower",
};

// {} marks the feature slot.
constexpr std::array<std::string_view, 4> kPositive = {
    "the {} area had excellent facilities",
    "i loved the {} here",
    "the {} was great and very clean",
    "really enjoyed the {} during our stay",
};
constexpr std::array<std::string_view, 4> kNeutral = {
    "the {} was okay",
    "the {} is fine but nothing special",
    "the {} was average for the price",
    "decent {} overall",
};
constexpr std::array<std::string_view, 4> kNegative = {
    "the {} was disappointing",
    "the {} needs a lot of work",
    "the {} was dirty and old",
    "did not like the {} at all",
};

std::string fill_template(std::string_view tmpl, std::string_view feature) {
  std::string out;
  const auto slot = tmpl.find("{}");
  out.append(tmpl.substr(0, slot));
  out.append(feature);
  out.append(tmpl.substr(slot + 2));
  return out;
}

std::string padded_id(char prefix, std::size_t k, std::size_t count) {
  const std::size_t width = std::to_string(count).size();
  std::string digits = std::to_string(k);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

std::span<const std::string_view> synthetic_feature_pool() { return kFeaturePool; }

std::vector<InteractionRecord> generate_synthetic_records(const SynthConfig& config) {
  if (config.n_users == 0 || config.n_items == 0 || config.n_records == 0 || config.latent_rank == 0) {
    throw ValidationError("synthetic corpus counts must all be >= 1");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t rank = config.latent_rank;
  const double mean = std::sqrt(3.0 / static_cast<double>(rank));

  const auto draw_latents = [&](std::size_t count) {
    std::vector<std::vector<double>> v(count, std::vector<double>(rank));
    for (auto& row : v)
      for (auto& x : row) x = mean + config.latent_spread * gauss(rng);
    return v;
  };
  const auto user_latent = draw_latents(config.n_users);
  const auto item_latent = draw_latents(config.n_items);

  std::uniform_int_distribution<std::size_t> style_dist(0, kPositive.size() - 1);
  std::vector<std::size_t> user_style(config.n_users);
  for (auto& s : user_style) s = style_dist(rng);

  std::uniform_int_distribution<std::size_t> feature_dist(0, kFeaturePool.size() - 1);
  std::vector<std::vector<std::string_view>> item_features(config.n_items);
  for (auto& feats : item_features) {
    const std::size_t count = 1 + rng() % 2;
    while (feats.size() < count) {
      const auto f = kFeaturePool[feature_dist(rng)];
      if (std::find(feats.begin(), feats.end(), f) == feats.end()) feats.push_back(f);
    }
  }

  // Pairs: a covering pass so every user and item appears (when n_records
  // allows it), then uniform random distinct pairs.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<std::size_t> item_perm(config.n_items);
  std::iota(item_perm.begin(), item_perm.end(), 0);
  std::shuffle(item_perm.begin(), item_perm.end(), rng);
  const std::size_t cover = std::max(config.n_users, config.n_items);
  for (std::size_t k = 0; k < cover && pairs.size() < config.n_records; ++k) {
    const std::pair<std::size_t, std::size_t> p{k % config.n_users, item_perm[k % config.n_items]};
    if (used.insert(p).second) pairs.push_back(p);
  }
  const std::size_t all_pairs = config.n_users * config.n_items;
  std::uniform_int_distribution<std::size_t> user_dist(0, config.n_users - 1);
  std::uniform_int_distribution<std::size_t> item_dist(0, config.n_items - 1);
  while (pairs.size() < config.n_records) {
    const std::pair<std::size_t, std::size_t> p{user_dist(rng), item_dist(rng)};
    if (used.size() >= all_pairs || used.insert(p).second) pairs.push_back(p);
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);

  std::vector<InteractionRecord> records;
  records.reserve(pairs.size());
  for (const auto& [u, i] : pairs) {
    double dot = 0.0;
    for (std::size_t k = 0; k < rank; ++k) dot += user_latent[u][k] * item_latent[i][k];
    const double noise = config.noise_sd > 0.0 ? config.noise_sd * gauss(rng) : 0.0;
    const double rating = std::clamp(dot + noise, 1.0, 5.0);

    const auto& feats = item_features[i];
    const std::string_view feature = feats[u % feats.size()];
    const auto& bucket = rating >= 3.5 ? kPositive : (rating >= 2.5 ? kNeutral : kNegative);
    const std::string sentence = fill_template(bucket[user_style[u]], feature);

    InteractionRecord rec;
    rec.user_id = padded_id('u', u, config.n_users);
    rec.item_id = padded_id('i', i, config.n_items);
    // Round-trip through the file format's precision so in-memory and loaded records agree.
    rec.rating = std::stod(format_rating(rating));
    rec.explanation = split_words(sentence);
    rec.features = {std::string(feature)};
    records.push_back(std::move(rec));
  }
  return records;
}

void write_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& out) {
  const auto records = generate_synthetic_records(config);
  std::ofstream file(out, std::ios::binary);
  if (!file) throw NotFoundError("cannot open output file " + out.string());
  file << "# synthetic corpus: users=" << config.n_users << " items=" << config.n_items
       << " records=" << config.n_records << " rank=" << config.latent_rank << " noise=" << config.noise_sd
       << " seed=" << config.seed << '\n';
  write_corpus(file, records);
}

}  // namespace promptrec
