#include "tham/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tham/error.hpp"

namespace tham::ad {

Tensor ParamStore::add(const std::string& name, Mat init, bool trainable) {
  if (contains(name)) fail(ErrorKind::Invalid, "duplicate parameter name: " + name);
  Tensor t = trainable ? Tensor::parameter(std::move(init)) : Tensor::constant(std::move(init));
  index_.emplace(name, entries_.size());
  entries_.push_back({name, t, trainable});
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Invalid, "unknown parameter: " + name);
  return entries_[it->second].tensor;
}

std::vector<NamedTensor> ParamStore::trainable() const {
  std::vector<NamedTensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e);
  }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<Mat> ParamStore::snapshot() const {
  std::vector<Mat> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor.value());
  return out;
}

void ParamStore::restore(const std::vector<Mat>& values) {
  if (values.size() != entries_.size()) {
    fail(ErrorKind::Invalid, "snapshot size does not match parameter store");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor t = entries_[i].tensor;
    t.mutable_value() = values[i];
  }
}

Mat xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform(-bound, bound);
  return out;
}

Mat xavier_uniform(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  return xavier_uniform(rows, cols, rng);
}

void Adam::step(ParamStore& params, double lr) {
  for (const auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    if (!e.tensor.grad().allFinite()) {
      fail(ErrorKind::Numeric, "non-finite gradient in parameter " + e.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    Tensor t = e.tensor;
    auto [it, inserted] = moments_.try_emplace(e.name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Mat::Zero(t.rows(), t.cols());
      mom.v = Mat::Zero(t.rows(), t.cols());
    }
    const Mat g = t.grad();
    mom.m = options_.beta1 * mom.m + (1.0 - options_.beta1) * g;
    mom.v = options_.beta2 * mom.v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    Mat& w = t.mutable_value();
    w.array() -= lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + options_.eps);
  }
}

namespace {

// Central differences over a geometric ladder of steps; the estimate where
// consecutive steps agree best is kept.
// Central differences over a shrinking ladder of steps. Returns the larger-step estimate of the
// first adjacent pair that agrees within roundoff; otherwise the closest pair.
double plateau_derivative(const std::function<Tensor()>& loss, double& slot, double h0) {
  constexpr int kSteps = 8;
  const double saved = slot;
  std::vector<double> d(kSteps), hs(kSteps);
  double h = h0;
  double base;
  {
    NoGradGuard guard;
    base = std::abs(loss().item());
  }
  for (int i = 0; i < kSteps; ++i, h /= 3.0) {
    NoGradGuard guard;
    slot = saved + h;
    const double plus = loss().item();
    slot = saved - h;
    const double minus = loss().item();
    slot = saved;
    d[static_cast<std::size_t>(i)] = (plus - minus) / (2.0 * h);
    hs[static_cast<std::size_t>(i)] = h;
  }
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t i = 1; i < d.size(); ++i) {
    const double noise = 4.0 * eps * base / hs[i];
    if (std::abs(d[i] - d[i - 1]) <= noise + 1e-6 * std::abs(d[i])) return d[i - 1];
  }
  std::size_t best = 1;
  for (std::size_t i = 2; i < d.size(); ++i) {
    if (std::abs(d[i] - d[i - 1]) < std::abs(d[best] - d[best - 1])) best = i;
  }
  return d[best - 1];
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           std::span<const NamedTensor> params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  loss().backward();

  GradCheckReport report;
  Rng rng(options.seed);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const Mat analytic = t.grad();
    const auto n = static_cast<std::size_t>(t.size());
    std::vector<std::size_t> picks(n);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (n > options.max_entries_per_param) {
      rng.shuffle(picks);
      picks.resize(options.max_entries_per_param);
      std::sort(picks.begin(), picks.end());
    }

    double param_max = 0.0;
    for (std::size_t k : picks) {
      double& slot = t.mutable_value().data()[k];
      const double saved = slot;
      double plus, minus;
      {
        NoGradGuard guard;
        slot = saved + options.h;
        plus = loss().item();
        slot = saved - options.h;
        minus = loss().item();
      }
      slot = saved;
      double numeric = (plus - minus) / (2.0 * options.h);
      const double a = analytic.data()[k];
      auto relative = [&](double num) {
        return std::abs(a - num) / std::max({std::abs(a), std::abs(num), options.abs_floor});
      };
      double rel = relative(numeric);
      if (rel >= options.tol && options.refine_h > 0.0) {
        numeric = plateau_derivative(loss, slot, options.refine_h);
        rel = relative(numeric);
        ++report.entries_refined;
      }
      ++report.entries_checked;
      if (rel >= options.tol) {
        ++report.entries_failed;
        report.largest_failed_gradient =
            std::max({report.largest_failed_gradient, std::abs(a), std::abs(numeric)});
      }
      param_max = std::max(param_max, rel);
      if (report.worst_index < 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = static_cast<Index>(k);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    report.per_param.emplace_back(p.name, param_max);
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace tham::ad
