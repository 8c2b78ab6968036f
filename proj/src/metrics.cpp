#include "tham/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "tham/error.hpp"

namespace tham {
namespace {

std::vector<std::size_t> ranked(const double* row, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

double f1_from(double tp, double fp, double fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

void check_shapes(const ad::Mat& probs, const ad::Mat& labels, const char* what) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
    fail(ErrorKind::Shape, std::string(what) + ": predictions and labels differ in shape");
  }
}

}  // namespace

double weighted_f1(const ad::Mat& probs, const ad::Mat& labels, double threshold) {
  check_shapes(probs, labels, "weighted_f1");
  double weighted = 0.0;
  double support_total = 0.0;
  for (ad::Index c = 0; c < probs.cols(); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (ad::Index i = 0; i < probs.rows(); ++i) {
      const bool predicted = probs(i, c) >= threshold;
      const bool actual = labels(i, c) > 0.5;
      if (predicted && actual) tp += 1;
      else if (predicted) fp += 1;
      else if (actual) fn += 1;
    }
    const double support = tp + fn;
    if (support == 0.0) continue;
    weighted += support * f1_from(tp, fp, fn);
    support_total += support;
  }
  if (support_total == 0.0) fail(ErrorKind::Invalid, "weighted_f1: no positive labels");
  return weighted / support_total;
}

RecallResult recall_at_k(const ad::Mat& probs, const ad::Mat& labels, std::size_t k) {
  check_shapes(probs, labels, "recall_at_k");
  if (k == 0) fail(ErrorKind::Invalid, "recall_at_k: k must be at least 1");
  RecallResult r;
  double total = 0.0;
  const auto n = static_cast<std::size_t>(probs.cols());
  for (ad::Index i = 0; i < probs.rows(); ++i) {
    double truth = 0.0;
    for (ad::Index c = 0; c < labels.cols(); ++c) truth += labels(i, c) > 0.5 ? 1.0 : 0.0;
    if (truth == 0.0) {
      ++r.skipped;
      continue;
    }
    double hits = 0.0;
    for (std::size_t c : ranked(probs.row(i).data(), n, k)) {
      if (labels(i, static_cast<ad::Index>(c)) > 0.5) hits += 1.0;
    }
    total += hits / truth;
    ++r.evaluated;
  }
  r.value = r.evaluated ? total / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::Shape, "auc: scores and labels differ in length");
  // Rank-sum form with midranks for ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] != 0) {
        positives += 1.0;
        rank_sum += midrank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) fail(ErrorKind::Invalid, "auc: labels contain a single class");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double binary_f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) fail(ErrorKind::Shape, "binary_f1: scores and labels differ in length");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) tp += 1;
    else if (predicted) fp += 1;
    else if (actual) fn += 1;
  }
  return f1_from(tp, fp, fn);
}

OccurredEmerging occurred_emerging_recall(const ad::Mat& probs, std::span<const Example> examples,
                                          std::size_t k) {
  if (static_cast<std::size_t>(probs.rows()) != examples.size()) {
    fail(ErrorKind::Shape, "occurred_emerging_recall: one prediction row per example required");
  }
  if (k == 0) fail(ErrorKind::Invalid, "occurred_emerging_recall: k must be at least 1");
  OccurredEmerging out;
  double occurred_total = 0.0;
  double emerging_total = 0.0;
  const auto n = static_cast<std::size_t>(probs.cols());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    std::vector<char> seen(n, 0);
    for (const Visit& v : ex.history) {
      for (CodeId c : v.codes) {
        if (c >= 0 && static_cast<std::size_t>(c) < n) seen[static_cast<std::size_t>(c)] = 1;
      }
    }
    std::vector<char> top(n, 0);
    for (std::size_t c : ranked(probs.row(static_cast<ad::Index>(i)).data(), n, k)) top[c] = 1;
    double occ = 0, occ_hit = 0, emg = 0, emg_hit = 0;
    for (CodeId c : ex.target_codes) {
      const auto u = static_cast<std::size_t>(c);
      if (seen[u]) {
        occ += 1;
        occ_hit += top[u];
      } else {
        emg += 1;
        emg_hit += top[u];
      }
    }
    if (occ > 0) {
      occurred_total += occ_hit / occ;
      ++out.occurred.evaluated;
    } else {
      ++out.occurred.skipped;
    }
    if (emg > 0) {
      emerging_total += emg_hit / emg;
      ++out.emerging.evaluated;
    } else {
      ++out.emerging.skipped;
    }
  }
  if (out.occurred.evaluated) out.occurred.value = occurred_total / static_cast<double>(out.occurred.evaluated);
  if (out.emerging.evaluated) out.emerging.value = emerging_total / static_cast<double>(out.emerging.evaluated);
  return out;
}

MetricMap diagnosis_metrics(const ad::Mat& probs, const ad::Mat& labels,
                            std::span<const Example> examples, std::span<const std::size_t> ks) {
  MetricMap m;
  m["w_f1"] = weighted_f1(probs, labels);
  for (std::size_t k : ks) {
    const std::string key = std::to_string(k);
    m["r_at." + key] = recall_at_k(probs, labels, k).value;
    const auto oe = occurred_emerging_recall(probs, examples, k);
    m["occurred_r_at." + key] = oe.occurred.value;
    m["emerging_r_at." + key] = oe.emerging.value;
  }
  return m;
}

MetricMap heart_failure_metrics(const ad::Mat& probs, std::span<const Example> examples) {
  if (probs.cols() != 1 || static_cast<std::size_t>(probs.rows()) != examples.size()) {
    fail(ErrorKind::Shape, "heart_failure_metrics: expected one probability per example");
  }
  std::vector<double> scores(examples.size());
  std::vector<int> labels(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    scores[i] = probs(static_cast<ad::Index>(i), 0);
    labels[i] = examples[i].heart_failure;
  }
  MetricMap m;
  m["auc"] = auc(scores, labels);
  m["f1"] = binary_f1(scores, labels);
  return m;
}

void EvalReport::add(std::uint64_t seed, MetricMap metrics) {
  seeds.push_back(seed);
  per_seed.push_back(std::move(metrics));
}

MetricMap EvalReport::mean() const {
  MetricMap out;
  if (per_seed.empty()) return out;
  for (const auto& [name, _] : per_seed.front()) {
    double total = 0.0;
    for (const auto& m : per_seed) total += m.at(name);
    out[name] = total / static_cast<double>(per_seed.size());
  }
  return out;
}

MetricMap EvalReport::stddev() const {
  MetricMap out;
  const MetricMap mu = mean();
  for (const auto& [name, avg] : mu) {
    double ss = 0.0;
    for (const auto& m : per_seed) ss += (m.at(name) - avg) * (m.at(name) - avg);
    out[name] = per_seed.size() > 1 ? std::sqrt(ss / static_cast<double>(per_seed.size() - 1)) : 0.0;
  }
  return out;
}

namespace {

nlohmann::ordered_json nest(const MetricMap& metrics) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [name, value] : metrics) {
    const auto dot = name.find('.');
    if (dot == std::string::npos) {
      out[name] = value;
    } else {
      out[name.substr(0, dot)][name.substr(dot + 1)] = value;
    }
  }
  return out;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["task"] = std::string(task_name(task));
  if (!split.empty()) doc["split"] = split;
  doc["examples"] = examples;
  doc["metrics"] = nest(mean());
  auto& s = doc["seeds"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < per_seed.size(); ++i) {
    nlohmann::ordered_json entry;
    entry["seed"] = seeds[i];
    entry["metrics"] = nest(per_seed[i]);
    s.push_back(std::move(entry));
  }
  doc["mean"] = nest(mean());
  doc["std"] = nest(stddev());
  return doc.dump(2) + "\n";
}

}  // namespace tham
