#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "tham/model.hpp"

namespace tham {

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double best_valid_loss = 0.0;
  bool improved = false;
};

struct FitResult {
  double best_valid_loss = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Shuffled mini-batch Adam training with the milestone schedule. After every
/// epoch the eval-mode validation loss is measured and the best parameters
/// (buffers included) are retained; they are restored into `model` on return.
/// Without validation examples the epoch's training loss drives selection.
FitResult fit(ThamModel& model, std::span<const Example> train, std::span<const Example> valid,
              const EpochCallback& on_epoch = {});

/// Mean eval-mode BCE over the examples.
double evaluate_loss(ThamModel& model, std::span<const Example> examples);

/// Eval-mode probabilities, one row per example.
ad::Mat predict_probabilities(ThamModel& model, std::span<const Example> examples);

/// Indices of the k largest entries of `row`, descending, ties by index.
std::vector<std::size_t> top_k_indices(const ad::Mat& row, std::size_t k);

/// Top-k (code, probability) pairs of one history.
std::vector<std::pair<CodeId, double>> predict_top_k(ThamModel& model, std::span<const Visit> history,
                                                     std::span<const std::int64_t> intervals,
                                                     std::size_t k);

}  // namespace tham
