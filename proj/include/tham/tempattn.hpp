#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tham/autodiff.hpp"
#include "tham/optim.hpp"
#include "tham/visitenc.hpp"

namespace tham {

struct EncoderLayerParams {
  ad::Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;  // m x m and 1 x m
  ad::Tensor ln1_gain, ln1_bias;
  ad::Tensor w_1, b_1;  // m x ffn
  ad::Tensor w_2, b_2;  // ffn x m
  ad::Tensor ln2_gain, ln2_bias;
};

struct EncoderOptions {
  std::size_t dim = 0;  // m
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t ffn = 1024;
  double dropout = 0.0;
};

/// Post-norm transformer encoder without masking.
class TimeAwareEncoder {
 public:
  TimeAwareEncoder() = default;
  TimeAwareEncoder(ad::ParamStore& store, const EncoderOptions& options, Rng& rng);

  /// `attention`, when given, receives one T x T matrix per layer and head.
  ad::Tensor forward(const ad::Tensor& x, ad::Mode mode, Rng& dropout_rng,
                     std::vector<ad::Mat>* attention = nullptr) const;

  const std::vector<EncoderLayerParams>& layers() const { return layers_; }

 private:
  EncoderOptions options_;
  std::vector<EncoderLayerParams> layers_;
};

/// alpha = softmax((H P) w_alpha).
class PreliminaryAttention {
 public:
  PreliminaryAttention() = default;
  PreliminaryAttention(ad::ParamStore& store, std::size_t dim, std::size_t width, Rng& rng);

  ad::Tensor forward(const ad::Tensor& hidden) const;  // 1 x T

  const ad::Tensor& projection() const { return projection_; }
  const ad::Tensor& context() const { return context_; }

 private:
  ad::Tensor projection_;  // m x b
  ad::Tensor context_;     // b x 1
};

/// Q = LeakyReLU(h_T W_Q + b_Q), K_t = LeakyReLU(gate(delta_t)),
/// beta = softmax(Q K^T / sqrt(q)).
class ComprehensiveAttention {
 public:
  struct Output {
    ad::Tensor query;  // 1 x q
    ad::Tensor beta;   // 1 x T
  };

  ComprehensiveAttention() = default;
  ComprehensiveAttention(ad::ParamStore& store, std::size_t dim, std::size_t query_dim,
                         std::size_t gate_width, double time_scale, double slope, Rng& rng);

  Output forward(const ad::Tensor& hidden, std::span<const std::int64_t> intervals) const;

  std::vector<ad::Tensor> parameters() const;

 private:
  ad::Tensor w_q_;  // m x q
  ad::Tensor b_q_;  // 1 x q
  IntervalGate keys_;
  std::size_t query_dim_ = 0;
  double slope_ = 0.01;
};

}  // namespace tham
