#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tham/cohort.hpp"
#include "tham/ontology.hpp"

namespace tham {

struct IntervalProfile {
  double mean_days = 30.0;
  double jitter_days = 10.0;
};

struct SynthConfig {
  std::size_t n_patients = 1000;
  std::size_t n_codes = 160;
  std::size_t n_drugs = 40;
  std::size_t tree_depth = 4;
  std::size_t branching = 4;
  std::size_t n_clusters = 8;
  std::size_t min_visits = 2;
  std::size_t max_visits = 6;
  // Cycled over clusters: even clusters fast/acute, odd clusters slow/chronic.
  std::vector<IntervalProfile> interval_profiles{{30.0, 20.0}, {365.0, 120.0}};
  double cooccur_rate = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Generative structure planted in a synthetic cohort.
struct SynthCluster {
  std::size_t id = 0;
  std::vector<std::string> codes;
  std::vector<std::string> drugs;
  std::string anchor;               // present in every visit of the cluster
  std::string partner;              // co-occurs with the anchor at cooccur_rate
  std::vector<std::string> stages;  // progression codes
  bool progresses = false;          // fast clusters advance one stage per visit
  IntervalProfile profile;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  double cooccur_rate = 0.0;
  std::vector<SynthCluster> clusters;
  std::vector<std::pair<std::string, std::size_t>> patient_cluster;  // patient id -> cluster
  // Per patient: the unique most probable code of the held-out next visit.
  std::vector<std::pair<std::string, std::string>> most_likely_next;

  std::string to_json() const;
};

struct SynthData {
  Cohort cohort;
  std::vector<Edge> ontology;
  GroundTruth truth;
};

SynthData generate(const SynthConfig& config);

}  // namespace tham
