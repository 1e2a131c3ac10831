#include "promptrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "promptrec/decoding.hpp"
#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> words, int n) {
  NgramCounts counts;
  const auto len = static_cast<std::size_t>(n);
  if (words.size() < len) return counts;
  for (std::size_t k = 0; k + len <= words.size(); ++k) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(k),
                                      words.begin() + static_cast<std::ptrdiff_t>(k + len))];
  }
  return counts;
}

std::size_t total(const NgramCounts& counts) {
  std::size_t t = 0;
  for (const auto& [g, c] : counts) t += c;
  return t;
}

std::size_t clipped_overlap(const NgramCounts& generated, const NgramCounts& reference) {
  std::size_t overlap = 0;
  for (const auto& [gram, count] : generated) {
    const auto it = reference.find(gram);
    if (it != reference.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

}  // namespace

FeatureSet extract_features(std::span<const std::string> words, const FeatureSet& features) {
  FeatureSet found;
  for (const auto& w : words) {
    if (features.contains(w)) found.insert(w);
  }
  return found;
}

double usr(std::span<const Words> generated) {
  if (generated.empty()) throw DomainError("USR of an empty corpus");
  const std::set<Words> unique(generated.begin(), generated.end());
  return static_cast<double>(unique.size()) / static_cast<double>(generated.size());
}

double fcr(std::span<const GeneratedSample> samples, const FeatureSet& features) {
  if (features.empty()) throw DomainError("FCR with an empty feature set");
  FeatureSet covered;
  for (const auto& s : samples) {
    for (const auto& f : s.features) {
      if (features.contains(f)) covered.insert(f);
    }
  }
  return static_cast<double>(covered.size()) / static_cast<double>(features.size());
}

double div(std::span<const GeneratedSample> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw DomainError("DIV needs at least two samples");
  std::map<std::string, std::size_t> occurrences;
  for (const auto& s : samples) {
    for (const auto& f : s.features) ++occurrences[f];
  }
  // Integer pair counts keep the result exact up to the final division.
  std::size_t shared = 0;
  for (const auto& [f, c] : occurrences) shared += c * (c - 1) / 2;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(shared) / pairs;
}

double bleu_n(std::span<const GeneratedSample> samples, int n) {
  if (n != 1 && n != 4) throw std::invalid_argument("BLEU order must be 1 or 4");
  if (samples.empty()) throw DomainError("BLEU of an empty corpus");
  std::vector<std::size_t> matches(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> candidates(static_cast<std::size_t>(n), 0);
  std::size_t gen_len = 0;
  std::size_t ref_len = 0;
  for (const auto& s : samples) {
    gen_len += s.generated.size();
    ref_len += s.reference.size();
    for (int order = 1; order <= n; ++order) {
      const auto g = ngrams(s.generated, order);
      matches[static_cast<std::size_t>(order - 1)] += clipped_overlap(g, ngrams(s.reference, order));
      candidates[static_cast<std::size_t>(order - 1)] += total(g);
    }
  }
  if (gen_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (matches[k] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[k]) / static_cast<double>(candidates[k]));
  }
  const double brevity =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(gen_len)));
  return 100.0 * brevity * std::exp(log_sum / static_cast<double>(n));
}

RougeScore rouge_n(std::span<const GeneratedSample> samples, int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("ROUGE order must be 1 or 2");
  if (samples.empty()) throw DomainError("ROUGE of an empty corpus");
  RougeScore sum;
  for (const auto& s : samples) {
    const auto g = ngrams(s.generated, n);
    const auto r = ngrams(s.reference, n);
    const auto overlap = static_cast<double>(clipped_overlap(g, r));
    const auto g_total = static_cast<double>(total(g));
    const auto r_total = static_cast<double>(total(r));
    const double p = g_total > 0 ? overlap / g_total : 0.0;
    const double rc = r_total > 0 ? overlap / r_total : 0.0;
    sum.precision += p;
    sum.recall += rc;
    sum.f1 += p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
  }
  const auto count = static_cast<double>(samples.size());
  return {100.0 * sum.precision / count, 100.0 * sum.recall / count, 100.0 * sum.f1 / count};
}

bool EvaluationReport::within_ranges() const {
  const auto pct = [](double v) { return v >= 0.0 && v <= 100.0; };
  const auto rouge_ok = [&](const RougeScore& r) { return pct(r.precision) && pct(r.recall) && pct(r.f1); };
  return usr > 0.0 && usr <= 1.0 && fcr >= 0.0 && fcr <= 1.0 && div >= 0.0 && pct(bleu1) && pct(bleu4) &&
         rouge_ok(rouge1) && rouge_ok(rouge2);
}

std::vector<std::string> report_columns() {
  return {"DIV", "USR", "FCR", "BLEU-1", "BLEU-4", "R1-Pre", "R1-Rec", "R1-F1", "R2-Pre", "R2-Rec", "R2-F1"};
}

std::vector<double> report_values(const EvaluationReport& r) {
  return {r.div,          r.usr,       r.fcr,          r.bleu1,           r.bleu4,      r.rouge1.precision,
          r.rouge1.recall, r.rouge1.f1, r.rouge2.precision, r.rouge2.recall, r.rouge2.f1};
}

void print_report_table(std::ostream& out, const EvaluationReport& report) {
  const auto columns = report_columns();
  const auto values = report_values(report);
  std::string header;
  std::string row;
  char cell[32];
  for (std::size_t k = 0; k < columns.size(); ++k) {
    std::snprintf(cell, sizeof(cell), "%8s", columns[k].c_str());
    header += cell;
    std::snprintf(cell, sizeof(cell), "%8.2f", values[k]);
    row += cell;
  }
  out << header << '\n' << row << '\n';
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json j = nlohmann::json::object();
  const auto columns = report_columns();
  const auto values = report_values(report);
  for (std::size_t k = 0; k < columns.size(); ++k) j[columns[k]] = values[k];
  j["samples"] = report.samples;
  return j;
}

EvaluationReport score_samples(std::span<const GeneratedSample> samples, const FeatureSet& features) {
  std::vector<Words> generated;
  generated.reserve(samples.size());
  for (const auto& s : samples) generated.push_back(s.generated);
  EvaluationReport r;
  r.samples = samples.size();
  r.usr = usr(generated);
  r.fcr = fcr(samples, features);
  r.div = div(samples);
  r.bleu1 = bleu_n(samples, 1);
  r.bleu4 = bleu_n(samples, 4);
  r.rouge1 = rouge_n(samples, 1);
  r.rouge2 = rouge_n(samples, 2);
  return r;
}

Evaluation evaluate(const Model& model, std::span<const InteractionRecord> records, const FeatureSet& features,
                    std::size_t max_length) {
  Evaluation ev;
  ev.samples.reserve(records.size());
  const DecodeOptions options{max_length, DecodeStrategy::kGreedy};
  for (const auto& rec : records) {
    GeneratedSample s;
    s.generated =
        generate_explanation(model.ids.users.at(rec.user_id), model.ids.items.at(rec.item_id), model, options);
    s.reference = rec.explanation;
    s.features = extract_features(s.generated, features);
    ev.samples.push_back(std::move(s));
  }
  ev.report = score_samples(ev.samples, features);
  return ev;
}

}  // namespace promptrec
