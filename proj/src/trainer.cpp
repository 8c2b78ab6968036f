#include "tham/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tham/error.hpp"

namespace tham {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5bd1e9955bd1e995ULL;
constexpr std::size_t kEvalChunk = 256;

}  // namespace

double evaluate_loss(ThamModel& model, std::span<const Example> examples) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  ad::NoGradGuard guard;
  ad::FlushDenormalsGuard flush;
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
    const auto chunk = examples.subspan(start, std::min(kEvalChunk, examples.size() - start));
    total += model.loss(chunk, ad::Mode::Eval).item() * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(examples.size());
}

FitResult fit(ThamModel& model, std::span<const Example> train, std::span<const Example> valid,
              const EpochCallback& on_epoch) {
  if (train.empty()) fail(ErrorKind::Invalid, "fit: no training examples");
  ad::FlushDenormalsGuard flush;
  const ModelConfig& config = model.config();
  ad::ParamStore& store = model.params();
  ad::Adam adam;
  Rng shuffle_rng(config.seed ^ kShuffleStream);

  FitResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<ad::Mat> best = store.snapshot();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Example*> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at(config.lr_milestones, epoch);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      store.zero_grad();
      const ad::Tensor loss = model.loss(batch, ad::Mode::Train);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                     ", step " + std::to_string(step + 1));
      }
      loss.backward();
      try {
        adam.step(store, lr);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + ")");
      }
      epoch_loss += value * static_cast<double>(batch.size());
    }
    store.zero_grad();

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    log.valid_loss = valid.empty() ? log.train_loss : evaluate_loss(model, valid);
    if (!std::isfinite(log.valid_loss)) {
      fail(ErrorKind::Numeric, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (log.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = log.valid_loss;
      result.best_epoch = epoch;
      best = store.snapshot();
      log.improved = true;
    }
    log.best_valid_loss = result.best_valid_loss;
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  if (result.best_epoch == 0) {
    result.best_valid_loss = valid.empty() ? evaluate_loss(model, train) : evaluate_loss(model, valid);
  }
  store.restore(best);
  return result;
}

ad::Mat predict_probabilities(ThamModel& model, std::span<const Example> examples) {
  ad::NoGradGuard guard;
  ad::FlushDenormalsGuard flush;
  ad::Mat out(static_cast<ad::Index>(examples.size()), static_cast<ad::Index>(model.output_dim()));
  if (examples.empty()) return out;
  const ad::Tensor features = model.graph_features(ad::Mode::Eval).codes;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.row(static_cast<ad::Index>(i)) =
        model.forward_patient(examples[i].history, examples[i].intervals, features, ad::Mode::Eval)
            .value();
  }
  return out;
}

std::vector<std::size_t> top_k_indices(const ad::Mat& row, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(row.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double va = row.data()[a];
                      const double vb = row.data()[b];
                      return va > vb || (va == vb && a < b);
                    });
  idx.resize(k);
  return idx;
}

std::vector<std::pair<CodeId, double>> predict_top_k(ThamModel& model, std::span<const Visit> history,
                                                     std::span<const std::int64_t> intervals,
                                                     std::size_t k) {
  if (history.empty()) fail(ErrorKind::Invalid, "predict: empty history");
  ad::NoGradGuard guard;
  ad::FlushDenormalsGuard flush;
  const ad::Tensor features = model.graph_features(ad::Mode::Eval).codes;
  const ad::Mat probs = model.forward_patient(history, intervals, features, ad::Mode::Eval).value();
  std::vector<std::pair<CodeId, double>> out;
  for (std::size_t i : top_k_indices(probs, k)) {
    out.emplace_back(static_cast<CodeId>(i), probs.data()[i]);
  }
  return out;
}

}  // namespace tham
