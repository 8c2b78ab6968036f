#include "tham/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "tham/error.hpp"
#include "tham/rng.hpp"

namespace tham {
namespace {

constexpr double kStageRate = 0.9;   // stage code present in a visit
constexpr double kExtraRate = 0.8;   // one background cluster code
constexpr double kNoiseRate = 0.1;   // one code from anywhere in the vocabulary
constexpr double kNoiseDrugRate = 0.05;
constexpr std::int64_t kFirstDayRange = 3650;

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > (std::size_t{1} << 40)) return out;
    out *= base;
  }
  return out;
}

std::string root_label(std::size_t r) { return r == 0 ? "428" : "R" + std::to_string(r); }

void push_unique(std::vector<CodeId>& into, CodeId id) {
  if (std::find(into.begin(), into.end(), id) == into.end()) into.push_back(id);
}

}  // namespace

void SynthConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Config, "synthetic config: " + what);
  };
  need(n_patients > 0, "n_patients must be positive");
  need(n_codes > 0, "n_codes must be positive");
  need(n_drugs > 0, "n_drugs must be positive");
  need(tree_depth > 0, "tree_depth must be positive");
  need(branching > 0, "branching must be positive");
  need(n_clusters > 0, "n_clusters must be positive");
  need(min_visits >= 2, "min_visits must be at least 2");
  need(max_visits >= min_visits, "max_visits must be >= min_visits");
  need(cooccur_rate >= 0.0 && cooccur_rate <= 1.0, "cooccur_rate must lie in [0, 1]");
  need(!interval_profiles.empty(), "interval_profiles must not be empty");
  for (const auto& p : interval_profiles) {
    need(p.mean_days > 0.0 && p.jitter_days >= 0.0, "interval profiles need mean > 0, jitter >= 0");
  }
  const std::size_t capacity = ipow(branching, tree_depth);
  need(n_codes <= capacity, "n_codes (" + std::to_string(n_codes) +
                                ") exceeds the tree capacity branching^tree_depth (" +
                                std::to_string(capacity) + ")");
  need(n_codes >= 4 * n_clusters,
       "n_codes must be at least 4 per cluster (anchor, partner and two stages)");
  need(n_drugs >= n_clusters, "n_drugs must be at least n_clusters");
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthData out;

  // Complete tree, leaves enumerated depth-first; the first n_codes leaves
  // become the code vocabulary. Only their ancestors are emitted.
  std::vector<std::string> leaf_names;
  leaf_names.reserve(config.n_codes);
  {
    std::vector<std::size_t> digits(config.tree_depth, 0);
    std::unordered_set<std::string> emitted;
    for (std::size_t leaf = 0; leaf < config.n_codes; ++leaf) {
      std::size_t rest = leaf;
      for (std::size_t level = config.tree_depth; level-- > 0;) {
        digits[level] = rest % config.branching;
        rest /= config.branching;
      }
      std::string name = root_label(digits[0]);
      std::string parent = kRootToken;
      for (std::size_t level = 0; level < config.tree_depth; ++level) {
        if (level > 0) name += "." + std::to_string(digits[level]);
        if (emitted.insert(name).second) out.ontology.emplace_back(name, parent);
        parent = name;
      }
      leaf_names.push_back(name);
    }
  }

  Cohort& cohort = out.cohort;
  for (const auto& name : leaf_names) cohort.codes.add(name);
  for (std::size_t d = 0; d < config.n_drugs; ++d) cohort.drugs.add("DRUG" + std::to_string(d));

  // Clusters take contiguous depth-first blocks, so they follow subtrees.
  struct ClusterIds {
    CodeId anchor, partner;
    std::vector<CodeId> stages, extras, drugs;
  };
  const std::size_t k = config.n_clusters;
  std::vector<ClusterIds> ids(k);
  GroundTruth& truth = out.truth;
  truth.seed = config.seed;
  truth.cooccur_rate = config.cooccur_rate;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t begin = c * config.n_codes / k;
    const std::size_t end = (c + 1) * config.n_codes / k;
    const std::size_t size = end - begin;
    const std::size_t n_stages = std::max<std::size_t>(2, std::min<std::size_t>(4, (size - 2) / 2));
    ClusterIds& cid = ids[c];
    cid.anchor = static_cast<CodeId>(begin);
    cid.partner = static_cast<CodeId>(begin + 1);
    for (std::size_t i = 0; i < n_stages; ++i) cid.stages.push_back(static_cast<CodeId>(begin + 2 + i));
    for (std::size_t i = begin + 2 + n_stages; i < end; ++i) cid.extras.push_back(static_cast<CodeId>(i));
    for (std::size_t d = c; d < config.n_drugs; d += k) cid.drugs.push_back(static_cast<CodeId>(d));

    SynthCluster sc;
    sc.id = c;
    for (std::size_t i = begin; i < end; ++i) sc.codes.push_back(leaf_names[i]);
    for (CodeId d : cid.drugs) sc.drugs.push_back(cohort.drugs.id(d));
    sc.anchor = leaf_names[begin];
    sc.partner = leaf_names[begin + 1];
    for (CodeId s : cid.stages) sc.stages.push_back(leaf_names[static_cast<std::size_t>(s)]);
    sc.progresses = (c % 2) == 0;
    sc.profile = config.interval_profiles[c % config.interval_profiles.size()];
    truth.clusters.push_back(std::move(sc));
  }

  cohort.patients.reserve(config.n_patients);
  for (std::size_t p = 0; p < config.n_patients; ++p) {
    const auto c = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(k) - 1));
    const ClusterIds& cid = ids[c];
    const SynthCluster& sc = truth.clusters[c];
    const auto n_visits = static_cast<std::size_t>(rng.integer(
        static_cast<std::int64_t>(config.min_visits), static_cast<std::int64_t>(config.max_visits)));
    const auto n_stages = static_cast<std::int64_t>(cid.stages.size());
    std::int64_t stage = sc.progresses ? 0 : rng.integer(0, n_stages - 1);
    std::int64_t day = rng.integer(0, kFirstDayRange);

    Patient patient;
    patient.id = "P" + std::to_string(p);
    for (std::size_t t = 0; t < n_visits; ++t) {
      if (t > 0) {
        const double lo = sc.profile.mean_days - sc.profile.jitter_days;
        const double hi = sc.profile.mean_days + sc.profile.jitter_days;
        day += std::max<std::int64_t>(1, std::llround(rng.uniform(lo, hi)));
        if (sc.progresses) stage = std::min(stage + 1, n_stages - 1);
      }
      Visit v;
      v.admit_day = day;
      v.codes.push_back(cid.anchor);
      if (rng.bernoulli(config.cooccur_rate)) v.codes.push_back(cid.partner);
      if (rng.bernoulli(kStageRate)) push_unique(v.codes, cid.stages[static_cast<std::size_t>(stage)]);
      if (!cid.extras.empty() && rng.bernoulli(kExtraRate)) {
        push_unique(v.codes, cid.extras[static_cast<std::size_t>(
                                 rng.integer(0, static_cast<std::int64_t>(cid.extras.size()) - 1))]);
      }
      if (rng.bernoulli(kNoiseRate)) {
        push_unique(v.codes, static_cast<CodeId>(
                                 rng.integer(0, static_cast<std::int64_t>(config.n_codes) - 1)));
      }
      const auto n_drugs = rng.integer(1, 2);
      for (std::int64_t i = 0; i < n_drugs; ++i) {
        push_unique(v.drugs, cid.drugs[static_cast<std::size_t>(
                                 rng.integer(0, static_cast<std::int64_t>(cid.drugs.size()) - 1))]);
      }
      if (rng.bernoulli(kNoiseDrugRate)) {
        push_unique(v.drugs, static_cast<CodeId>(
                                 rng.integer(0, static_cast<std::int64_t>(config.n_drugs) - 1)));
      }
      patient.visits.push_back(std::move(v));
    }
    normalize_visits(patient);
    truth.patient_cluster.emplace_back(patient.id, c);
    truth.most_likely_next.emplace_back(patient.id, sc.anchor);
    cohort.patients.push_back(std::move(patient));
  }
  return out;
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  doc["cooccur_rate"] = cooccur_rate;
  auto& clusters_json = doc["clusters"] = nlohmann::ordered_json::array();
  for (const auto& c : clusters) {
    nlohmann::ordered_json jc;
    jc["id"] = c.id;
    jc["anchor"] = c.anchor;
    jc["partner"] = c.partner;
    jc["stages"] = c.stages;
    jc["progresses"] = c.progresses;
    jc["interval_mean_days"] = c.profile.mean_days;
    jc["interval_jitter_days"] = c.profile.jitter_days;
    jc["codes"] = c.codes;
    jc["drugs"] = c.drugs;
    clusters_json.push_back(std::move(jc));
  }
  auto& pairs = doc["planted_pairs"] = nlohmann::ordered_json::array();
  for (const auto& c : clusters) {
    pairs.push_back({{"a", c.anchor}, {"b", c.partner}, {"rate", cooccur_rate}});
  }
  auto& pc = doc["patient_cluster"] = nlohmann::ordered_json::object();
  for (const auto& [id, c] : patient_cluster) pc[id] = c;
  auto& ml = doc["most_likely_next"] = nlohmann::ordered_json::object();
  for (const auto& [id, code] : most_likely_next) ml[id] = code;
  return doc.dump(2) + "\n";
}

}  // namespace tham
