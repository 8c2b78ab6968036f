#pragma once

#include <string>
#include <vector>

#include "tham/autodiff.hpp"
#include "tham/optim.hpp"

namespace tham {

struct HgnnLayer {
  ad::Tensor w_cd;  // code dim -> drug dim
  ad::Tensor w_dc;  // drug dim -> code dim
  ad::Tensor w_c;   // code update
  ad::Tensor w_d;   // drug update
  ad::BatchNormState bn_c;
  ad::BatchNormState bn_d;
};

struct NodeFeatures {
  ad::Tensor codes;  // |C| x width
  ad::Tensor drugs;  // |D| x width
};

/// M_D = H_D + B_DC H_C W_CD and M_C = H_C + B_DC^T H_D W_DC + A_CC H_C.
/// `bdc_t` is B_DC transposed, passed in so it is built once per graph.
NodeFeatures aggregate(const NodeFeatures& h, const ad::Tensor& bdc, const ad::Tensor& bdc_t,
                       const ad::Tensor& acc, const HgnnLayer& layer);

/// H' = LeakyReLU(BatchNorm(M W)) for codes and drugs separately.
NodeFeatures update(const NodeFeatures& m, HgnnLayer& layer, ad::Mode mode, double slope);

struct HgnnOptions {
  std::size_t n_drugs = 0;
  std::size_t code_in = 0;  // H * m_c
  std::size_t drug_in = 0;  // m_d
  std::vector<std::size_t> code_dims;
  std::vector<std::size_t> drug_dims;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

/// Drug embedding table N plus the aggregate/update stack.
class Hgnn {
 public:
  Hgnn() = default;
  Hgnn(ad::ParamStore& store, const HgnnOptions& options, Rng& rng);

  NodeFeatures forward(const ad::Tensor& code_embedding, const ad::Tensor& bdc,
                       const ad::Tensor& acc, ad::Mode mode);

  const ad::Tensor& drug_embedding() const { return drug_embedding_; }
  std::vector<HgnnLayer>& layers() { return layers_; }
  const std::vector<HgnnLayer>& layers() const { return layers_; }

 private:
  HgnnOptions options_;
  ad::Tensor drug_embedding_;
  std::vector<HgnnLayer> layers_;
};

}  // namespace tham
