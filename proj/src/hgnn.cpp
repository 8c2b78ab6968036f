#include "tham/hgnn.hpp"

#include "tham/error.hpp"

namespace tham {
namespace {

ad::BatchNormState make_bn(ad::ParamStore& store, const std::string& prefix, std::size_t width,
                           const HgnnOptions& options) {
  const auto c = static_cast<ad::Index>(width);
  ad::BatchNormState bn;
  bn.gamma = store.add(prefix + ".gamma", ad::Mat::Ones(1, c));
  bn.beta = store.add(prefix + ".beta", ad::Mat::Zero(1, c));
  bn.running_mean = store.add(prefix + ".running_mean", ad::Mat::Zero(1, c), false);
  bn.running_var = store.add(prefix + ".running_var", ad::Mat::Ones(1, c), false);
  bn.momentum = options.bn_momentum;
  bn.eps = options.bn_eps;
  return bn;
}

}  // namespace

NodeFeatures aggregate(const NodeFeatures& h, const ad::Tensor& bdc, const ad::Tensor& bdc_t,
                       const ad::Tensor& acc, const HgnnLayer& layer) {
  NodeFeatures m;
  m.drugs = ad::add(h.drugs, ad::matmul(ad::matmul(bdc, h.codes), layer.w_cd));
  m.codes = ad::add(ad::add(h.codes, ad::matmul(ad::matmul(bdc_t, h.drugs), layer.w_dc)),
                    ad::matmul(acc, h.codes));
  return m;
}

NodeFeatures update(const NodeFeatures& m, HgnnLayer& layer, ad::Mode mode, double slope) {
  NodeFeatures out;
  out.codes = ad::leaky_relu(ad::batchnorm(ad::matmul(m.codes, layer.w_c), layer.bn_c, mode), slope);
  if (m.drugs.rows() == 0) {
    out.drugs = ad::matmul(m.drugs, layer.w_d);  // cohort without prescriptions
  } else {
    out.drugs = ad::leaky_relu(ad::batchnorm(ad::matmul(m.drugs, layer.w_d), layer.bn_d, mode), slope);
  }
  return out;
}

Hgnn::Hgnn(ad::ParamStore& store, const HgnnOptions& options, Rng& rng) : options_(options) {
  if (options.code_dims.size() != options.drug_dims.size()) {
    fail(ErrorKind::Config, "hgnn: code_dims and drug_dims differ in length");
  }
  drug_embedding_ = store.add(
      "gnn.drug_embedding", ad::xavier_uniform(static_cast<ad::Index>(options.n_drugs),
                                               static_cast<ad::Index>(options.drug_in), rng));
  std::size_t mc = options.code_in;
  std::size_t md = options.drug_in;
  for (std::size_t l = 0; l < options.code_dims.size(); ++l) {
    const std::string p = "gnn.l" + std::to_string(l);
    const auto next_c = options.code_dims[l];
    const auto next_d = options.drug_dims[l];
    auto dim = [](std::size_t v) { return static_cast<ad::Index>(v); };
    HgnnLayer layer;
    layer.w_cd = store.add(p + ".W_CD", ad::xavier_uniform(dim(mc), dim(md), rng));
    layer.w_dc = store.add(p + ".W_DC", ad::xavier_uniform(dim(md), dim(mc), rng));
    layer.w_c = store.add(p + ".W_C", ad::xavier_uniform(dim(mc), dim(next_c), rng));
    layer.w_d = store.add(p + ".W_D", ad::xavier_uniform(dim(md), dim(next_d), rng));
    layer.bn_c = make_bn(store, p + ".bn_C", next_c, options);
    layer.bn_d = make_bn(store, p + ".bn_D", next_d, options);
    layers_.push_back(std::move(layer));
    mc = next_c;
    md = next_d;
  }
}

NodeFeatures Hgnn::forward(const ad::Tensor& code_embedding, const ad::Tensor& bdc,
                           const ad::Tensor& acc, ad::Mode mode) {
  NodeFeatures h{code_embedding, drug_embedding_};
  if (layers_.empty()) return h;
  const ad::Tensor bdc_t = ad::transpose(bdc);
  for (auto& layer : layers_) {
    h = update(aggregate(h, bdc, bdc_t, acc, layer), layer, mode, options_.leaky_slope);
  }
  return h;
}

}  // namespace tham
