#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tham/autodiff.hpp"

namespace tham::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Ordered registry of every named array in a model. Trainable entries are
/// updated by the optimizer; the rest are buffers (normalization statistics,
/// fixed graph matrices) that travel with checkpoints.
class ParamStore {
 public:
  Tensor add(const std::string& name, Mat init, bool trainable = true);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::span<const NamedTensor> entries() const { return entries_; }
  std::vector<NamedTensor> trainable() const;

  void zero_grad();
  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& values);

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform on +-sqrt(6 / (rows + cols)).
Mat xavier_uniform(Index rows, Index cols, Rng& rng);
Mat xavier_uniform(Index rows, Index cols, std::uint64_t seed);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// One bias-corrected update of every trainable entry in `params`.
  /// Throws a Numeric error naming the first parameter with a non-finite
  /// gradient, before anything is modified.
  void step(ParamStore& params, double lr);

  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  AdamOptions options_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-6;
  // Larger parameters are checked on a seeded sample of this many entries.
  std::size_t max_entries_per_param = 200;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error, so exact zeros compare sanely.
  double abs_floor = 1e-8;
  // Entries failing the plain central difference are re-estimated over a
  // ladder of steps starting here; 0 disables.
  double refine_h = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t entries_refined = 0;
  std::size_t entries_failed = 0;
  double largest_failed_gradient = 0.0;  // max(|analytic|, |numeric|) over failed entries
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<std::pair<std::string, double>> per_param;  // name, max rel error
  bool passed = true;
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences (f(x+h) - f(x-h)) / 2h. `loss` must rebuild its graph on every
/// call and be deterministic.
GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           std::span<const NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace tham::ad
