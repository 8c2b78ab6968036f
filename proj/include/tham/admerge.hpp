#pragma once

#include "tham/autodiff.hpp"
#include "tham/optim.hpp"

namespace tham {

/// delta = softmax(x W_x + b_x) over two sources.
class MergeGate {
 public:
  MergeGate() = default;
  MergeGate(ad::ParamStore& store, std::size_t input_dim, Rng& rng);

  ad::Tensor forward(const ad::Tensor& query) const;  // 1 x 2

  const ad::Tensor& weight() const { return weight_; }
  const ad::Tensor& bias() const { return bias_; }

 private:
  ad::Tensor weight_;  // q x 2
  ad::Tensor bias_;    // 1 x 2
};

/// eta' = delta_1 alpha + delta_2 beta (1 x T).
ad::Tensor merge(const ad::Tensor& alpha, const ad::Tensor& beta, const ad::Tensor& delta);

/// O = eta' H (1 x m).
ad::Tensor pool(const ad::Tensor& hidden, const ad::Tensor& weights);

}  // namespace tham
