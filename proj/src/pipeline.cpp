#include "tham/pipeline.hpp"

#include <algorithm>
#include <set>

#include "tham/error.hpp"

namespace tham {

Split split_examples(std::vector<Example> examples, const SplitConfig& config) {
  const SplitCounts counts = config.counts ? *config.counts : default_split_counts(examples.size());
  return split(std::move(examples), counts, config.seed);
}

PreparedData prepare(const Cohort& raw, const std::vector<Edge>* ontology,
                     const ModelConfig& model, const SplitConfig& split_config) {
  PreparedData out;
  Split raw_split = split_examples(make_examples(raw, model.task), split_config);
  if (raw_split.train.empty()) fail(ErrorKind::Config, "the training split is empty");

  std::set<std::size_t> train_patients;
  for (const Example& ex : raw_split.train) train_patients.insert(ex.patient);
  const std::vector<std::size_t> indices(train_patients.begin(), train_patients.end());
  const Cohort raw_train = raw.subset(indices);
  const VocabPair vocab = collect_vocab(raw_train);
  out.train_cohort = reindex(raw_train, vocab.codes, vocab.drugs);

  auto convert = [&](const std::vector<Example>& from, std::vector<Example>& to) {
    to.reserve(from.size());
    for (const Example& ex : from) to.push_back(reindex(ex, raw, vocab.codes, vocab.drugs));
  };
  convert(raw_split.train, out.split.train);
  convert(raw_split.valid, out.split.valid);
  convert(raw_split.test, out.split.test);

  out.graphs = build_graphs(out.train_cohort, model.lambda);
  if (ontology != nullptr) {
    out.tree = build_ontology(*ontology, vocab.codes, model.tree_depth);
  } else {
    std::vector<Edge> flat;
    for (const auto& id : vocab.codes.ids()) flat.emplace_back(id, kRootToken);
    out.tree = build_ontology(flat, vocab.codes, model.tree_depth);
    out.warnings.emplace_back("no ontology given; every code is treated as its own root");
  }
  return out;
}

TrainOutcome train(const PreparedData& data, const ModelConfig& model, const SplitConfig& split,
                   const EpochCallback& on_epoch) {
  TrainOutcome out;
  out.model = std::make_unique<ThamModel>(model, data.tree, data.train_cohort.codes,
                                          data.train_cohort.drugs, data.graphs);
  out.fit = fit(*out.model, data.split.train, data.split.valid, on_epoch);
  out.meta.best_valid_loss = out.fit.best_valid_loss;
  out.meta.best_epoch = out.fit.best_epoch;
  out.meta.split = split;
  return out;
}

std::vector<Example> partition_for(const ThamModel& model, const SplitConfig& split_config,
                                   const Cohort& raw, std::string_view which) {
  std::vector<Example> chosen;
  if (which == "all") {
    chosen = make_examples(raw, model.config().task);
  } else {
    Split s = split_examples(make_examples(raw, model.config().task), split_config);
    if (which == "train") chosen = std::move(s.train);
    else if (which == "valid") chosen = std::move(s.valid);
    else if (which == "test") chosen = std::move(s.test);
    else fail(ErrorKind::Config, "unknown split '" + std::string(which) + "' (train, valid, test or all)");
  }
  std::vector<Example> out;
  out.reserve(chosen.size());
  for (const Example& ex : chosen) out.push_back(reindex(ex, raw, model.codes(), model.drugs()));
  return out;
}

MetricMap evaluate_metrics(ThamModel& model, std::span<const Example> examples,
                           std::span<const std::size_t> ks) {
  if (examples.empty()) fail(ErrorKind::Config, "no examples to evaluate");
  const ad::Mat probs = predict_probabilities(model, examples);
  if (model.config().task == Task::HeartFailure) return heart_failure_metrics(probs, examples);
  ad::Mat labels(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    labels.row(static_cast<ad::Index>(i)) = model.target(examples[i]);
  }
  return diagnosis_metrics(probs, labels, examples, ks);
}

}  // namespace tham
