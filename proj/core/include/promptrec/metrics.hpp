#pragma once

// Explainability metrics (USR, FCR, DIV) and n-gram text metrics (BLEU,
// ROUGE) over generated explanations.
//
// Conventions:
//  - USR counts exact full-sentence duplicates.
//  - DIV is the mean pairwise feature-set intersection size (lower is better).
//  - BLEU is corpus level: clipped n-gram counts and lengths are summed over
//    the corpus before combining; no smoothing.
//  - ROUGE is computed per sentence with clipped overlap and averaged.
//  - BLEU and ROUGE are reported as percentages.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptrec/corpus.hpp"
#include "promptrec/model.hpp"

namespace promptrec {

struct GeneratedSample {
  Words generated;
  Words reference;
  /// Features found in `generated`.
  FeatureSet features;
};

/// Exact word match of the sequence against the dataset feature set.
FeatureSet extract_features(std::span<const std::string> words, const FeatureSet& features);

/// Throws DomainError for an empty list.
double usr(std::span<const Words> generated);
/// Throws DomainError for an empty feature set.
double fcr(std::span<const GeneratedSample> samples, const FeatureSet& features);
/// Counting form sum_f c_f (c_f - 1) / 2 over N (N - 1) / 2. Throws DomainError for N < 2.
double div(std::span<const GeneratedSample> samples);

/// n in {1, 4}; percentage.
double bleu_n(std::span<const GeneratedSample> samples, int n);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// n in {1, 2}; percentages.
RougeScore rouge_n(std::span<const GeneratedSample> samples, int n);

struct EvaluationReport {
  double div = 0.0;
  double usr = 0.0;
  double fcr = 0.0;
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  RougeScore rouge1;
  RougeScore rouge2;
  std::size_t samples = 0;

  /// USR in (0,1], FCR in [0,1], DIV >= 0, text metrics in [0,100].
  bool within_ranges() const;
};

/// Column order of the printed table.
std::vector<std::string> report_columns();
std::vector<double> report_values(const EvaluationReport& report);

void print_report_table(std::ostream& out, const EvaluationReport& report);
nlohmann::json to_json(const EvaluationReport& report);

EvaluationReport score_samples(std::span<const GeneratedSample> samples, const FeatureSet& features);

struct Evaluation {
  EvaluationReport report;
  std::vector<GeneratedSample> samples;
};

/// Greedy generation for every record, then every metric against the
/// records' explanations.
Evaluation evaluate(const Model& model, std::span<const InteractionRecord> records, const FeatureSet& features,
                    std::size_t max_length);

}  // namespace promptrec
