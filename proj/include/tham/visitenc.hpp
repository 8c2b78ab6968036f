#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tham/autodiff.hpp"
#include "tham/cohort.hpp"
#include "tham/optim.hpp"

namespace tham {

/// Mean of the code feature rows of one visit (UNK codes add a zero row).
ad::Tensor visit_mean(std::span<const CodeId> codes, const ad::Tensor& code_features);

/// Row t is visit_mean of history[t]; built as one gather and one matmul.
ad::Tensor visit_means(std::span<const Visit> history, const ad::Tensor& code_features);

/// Sinusoidal table, positions from 0: sin on even columns, cos on odd ones.
ad::Mat positional_encoding(std::size_t length, std::size_t dim);

/// W_f (1 - tanh((W_e * delta / scale + b_e)^2)) + b_f, one row per interval.
/// Used for the visit time embedding and for the comprehensive-attention keys.
class IntervalGate {
 public:
  struct Names {
    std::string w_inner, b_inner, w_outer, b_outer;
  };

  IntervalGate() = default;
  IntervalGate(ad::ParamStore& store, const Names& names, std::size_t width, std::size_t out_dim,
               double time_scale, Rng& rng);

  ad::Tensor forward(std::span<const std::int64_t> intervals) const;

  const ad::Tensor& w_inner() const { return w_inner_; }
  const ad::Tensor& b_inner() const { return b_inner_; }
  const ad::Tensor& w_outer() const { return w_outer_; }
  const ad::Tensor& b_outer() const { return b_outer_; }

 private:
  ad::Tensor w_inner_;  // 1 x a
  ad::Tensor b_inner_;  // 1 x a
  ad::Tensor w_outer_;  // a x out
  ad::Tensor b_outer_;  // 1 x out
  double time_scale_ = 180.0;
};

/// Rows o_t + f_t + Pos_t; the gate term is skipped when `gate` is null.
ad::Tensor encode_sequence(std::span<const Visit> history, std::span<const std::int64_t> intervals,
                           const ad::Tensor& code_features, const IntervalGate* gate);

}  // namespace tham
