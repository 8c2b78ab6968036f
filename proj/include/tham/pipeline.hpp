#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tham/cograph.hpp"
#include "tham/config.hpp"
#include "tham/metrics.hpp"
#include "tham/model.hpp"
#include "tham/ontology.hpp"
#include "tham/trainer.hpp"

namespace tham {

/// Train/valid/test partition of the cohort's examples under a split config.
Split split_examples(std::vector<Example> examples, const SplitConfig& config);

/// Everything a model is built from, derived from the training split only:
/// the vocabulary, the co-occurrence graphs and the ontology paths. Examples
/// of every partition are re-expressed against that vocabulary.
struct PreparedData {
  Split split;
  Cohort train_cohort;
  CoGraphs graphs;
  OntologyTree tree;
  std::vector<std::string> warnings;
};

/// With no ontology edges every code becomes its own root.
PreparedData prepare(const Cohort& raw, const std::vector<Edge>* ontology,
                     const ModelConfig& model, const SplitConfig& split);

struct TrainOutcome {
  std::unique_ptr<ThamModel> model;
  FitResult fit;
  CheckpointMeta meta;
};

TrainOutcome train(const PreparedData& data, const ModelConfig& model, const SplitConfig& split,
                   const EpochCallback& on_epoch = {});

/// One partition ("train", "valid", "test" or "all") of `raw`, re-expressed
/// against the model's vocabulary.
std::vector<Example> partition_for(const ThamModel& model, const SplitConfig& split,
                                   const Cohort& raw, std::string_view which);

/// Task-appropriate metrics of the model's eval-mode predictions.
MetricMap evaluate_metrics(ThamModel& model, std::span<const Example> examples,
                           std::span<const std::size_t> ks);

}  // namespace tham
