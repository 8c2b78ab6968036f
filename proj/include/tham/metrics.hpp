#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tham/autodiff.hpp"
#include "tham/cohort.hpp"

namespace tham {

/// Per-code F1 of the thresholded predictions, weighted by label support.
/// Codes without positive labels are skipped; throws when none has support.
double weighted_f1(const ad::Mat& probs, const ad::Mat& labels, double threshold = 0.5);

struct RecallResult {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // examples with an empty true set
};

/// Mean over examples of |top-k ∩ truth| / |truth|, ties by ascending index.
RecallResult recall_at_k(const ad::Mat& probs, const ad::Mat& labels, std::size_t k);

/// Mann-Whitney: P(s+ > s-) + 0.5 P(s+ = s-). Throws on single-class labels.
double auc(std::span<const double> scores, std::span<const int> labels);

double binary_f1(std::span<const double> scores, std::span<const int> labels,
                 double threshold = 0.5);

struct OccurredEmerging {
  RecallResult occurred;
  RecallResult emerging;
};

/// Splits each example's true codes by whether they appear in its history and
/// averages recall@k over examples whose partition is nonempty.
OccurredEmerging occurred_emerging_recall(const ad::Mat& probs, std::span<const Example> examples,
                                          std::size_t k);

/// Flat metric names: w_f1, r_at.<k>, occurred_r_at.<k>, emerging_r_at.<k>, auc, f1.
using MetricMap = std::map<std::string, double>;

MetricMap diagnosis_metrics(const ad::Mat& probs, const ad::Mat& labels,
                            std::span<const Example> examples, std::span<const std::size_t> ks);
MetricMap heart_failure_metrics(const ad::Mat& probs, std::span<const Example> examples);

struct EvalReport {
  Task task = Task::Diagnosis;
  std::string split;
  std::size_t examples = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricMap> per_seed;

  void add(std::uint64_t seed, MetricMap metrics);
  MetricMap mean() const;
  /// Sample standard deviation across seeds (0 for a single seed).
  MetricMap stddev() const;
  std::string to_json() const;
};

}  // namespace tham
