#include "tham/tempattn.hpp"

#include <cmath>

#include "tham/error.hpp"

namespace tham {

TimeAwareEncoder::TimeAwareEncoder(ad::ParamStore& store, const EncoderOptions& options, Rng& rng)
    : options_(options) {
  if (options.heads == 0 || options.dim % options.heads != 0) {
    fail(ErrorKind::Config, "encoder: dimension " + std::to_string(options.dim) +
                                " is not divisible by " + std::to_string(options.heads) + " heads");
  }
  const auto m = static_cast<ad::Index>(options.dim);
  const auto f = static_cast<ad::Index>(options.ffn);
  for (std::size_t l = 0; l < options.layers; ++l) {
    const std::string p = "tte.l" + std::to_string(l);
    EncoderLayerParams layer;
    layer.w_q = store.add(p + ".W_q", ad::xavier_uniform(m, m, rng));
    layer.b_q = store.add(p + ".b_q", ad::Mat::Zero(1, m));
    layer.w_k = store.add(p + ".W_k", ad::xavier_uniform(m, m, rng));
    layer.b_k = store.add(p + ".b_k", ad::Mat::Zero(1, m));
    layer.w_v = store.add(p + ".W_v", ad::xavier_uniform(m, m, rng));
    layer.b_v = store.add(p + ".b_v", ad::Mat::Zero(1, m));
    layer.w_o = store.add(p + ".W_o", ad::xavier_uniform(m, m, rng));
    layer.b_o = store.add(p + ".b_o", ad::Mat::Zero(1, m));
    layer.ln1_gain = store.add(p + ".ln1.gain", ad::Mat::Ones(1, m));
    layer.ln1_bias = store.add(p + ".ln1.bias", ad::Mat::Zero(1, m));
    layer.w_1 = store.add(p + ".ffn.W_1", ad::xavier_uniform(m, f, rng));
    layer.b_1 = store.add(p + ".ffn.b_1", ad::Mat::Zero(1, f));
    layer.w_2 = store.add(p + ".ffn.W_2", ad::xavier_uniform(f, m, rng));
    layer.b_2 = store.add(p + ".ffn.b_2", ad::Mat::Zero(1, m));
    layer.ln2_gain = store.add(p + ".ln2.gain", ad::Mat::Ones(1, m));
    layer.ln2_bias = store.add(p + ".ln2.bias", ad::Mat::Zero(1, m));
    layers_.push_back(std::move(layer));
  }
}

ad::Tensor TimeAwareEncoder::forward(const ad::Tensor& x, ad::Mode mode, Rng& dropout_rng,
                                     std::vector<ad::Mat>* attention) const {
  const auto heads = static_cast<ad::Index>(options_.heads);
  const ad::Index head_dim = static_cast<ad::Index>(options_.dim) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  ad::Tensor h = x;
  for (const auto& layer : layers_) {
    const ad::Tensor q = ad::add(ad::matmul(h, layer.w_q), layer.b_q);
    const ad::Tensor k = ad::add(ad::matmul(h, layer.w_k), layer.b_k);
    const ad::Tensor v = ad::add(ad::matmul(h, layer.w_v), layer.b_v);
    std::vector<ad::Tensor> outputs;
    outputs.reserve(static_cast<std::size_t>(heads));
    for (ad::Index i = 0; i < heads; ++i) {
      const ad::Tensor qi = ad::slice_cols(q, i * head_dim, head_dim);
      const ad::Tensor ki = ad::slice_cols(k, i * head_dim, head_dim);
      const ad::Tensor vi = ad::slice_cols(v, i * head_dim, head_dim);
      const ad::Tensor weights = ad::softmax(ad::scale(ad::matmul(qi, ad::transpose(ki)), inv_sqrt));
      if (attention != nullptr) attention->push_back(weights.value());
      outputs.push_back(ad::matmul(weights, vi));
    }
    const ad::Tensor joined = heads == 1 ? outputs[0] : ad::concat_cols(outputs);
    const ad::Tensor attended = ad::add(ad::matmul(joined, layer.w_o), layer.b_o);
    h = ad::layernorm(ad::add(h, ad::dropout(attended, options_.dropout, dropout_rng, mode)),
                      layer.ln1_gain, layer.ln1_bias);
    const ad::Tensor inner = ad::relu(ad::add(ad::matmul(h, layer.w_1), layer.b_1));
    const ad::Tensor ffn = ad::add(ad::matmul(inner, layer.w_2), layer.b_2);
    h = ad::layernorm(ad::add(h, ad::dropout(ffn, options_.dropout, dropout_rng, mode)),
                      layer.ln2_gain, layer.ln2_bias);
  }
  return h;
}

PreliminaryAttention::PreliminaryAttention(ad::ParamStore& store, std::size_t dim,
                                           std::size_t width, Rng& rng) {
  const auto m = static_cast<ad::Index>(dim);
  const auto b = static_cast<ad::Index>(width);
  projection_ = store.add("prelim.P", ad::xavier_uniform(m, b, rng));
  context_ = store.add("prelim.w_alpha", ad::xavier_uniform(b, 1, rng));
}

ad::Tensor PreliminaryAttention::forward(const ad::Tensor& hidden) const {
  const ad::Tensor scores = ad::matmul(ad::matmul(hidden, projection_), context_);  // T x 1
  return ad::softmax(ad::transpose(scores));
}

ComprehensiveAttention::ComprehensiveAttention(ad::ParamStore& store, std::size_t dim,
                                               std::size_t query_dim, std::size_t gate_width,
                                               double time_scale, double slope, Rng& rng)
    : query_dim_(query_dim), slope_(slope) {
  const auto m = static_cast<ad::Index>(dim);
  const auto q = static_cast<ad::Index>(query_dim);
  w_q_ = store.add("comp.W_Q", ad::xavier_uniform(m, q, rng));
  b_q_ = store.add("comp.b_Q", ad::Mat::Zero(1, q));
  keys_ = IntervalGate(store, {"comp.W_t", "comp.b_t", "comp.W_k", "comp.b_k"}, gate_width,
                       query_dim, time_scale, rng);
}

ComprehensiveAttention::Output ComprehensiveAttention::forward(
    const ad::Tensor& hidden, std::span<const std::int64_t> intervals) const {
  if (static_cast<std::size_t>(hidden.rows()) != intervals.size()) {
    fail(ErrorKind::Shape, "comprehensive attention: hidden rows and intervals differ");
  }
  const ad::Tensor last = ad::slice_rows(hidden, hidden.rows() - 1, 1);
  Output out;
  out.query = ad::leaky_relu(ad::add(ad::matmul(last, w_q_), b_q_), slope_);
  const ad::Tensor keys = ad::leaky_relu(keys_.forward(intervals), slope_);  // T x q
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(query_dim_));
  out.beta = ad::softmax(ad::scale(ad::matmul(out.query, ad::transpose(keys)), inv_sqrt));
  return out;
}

std::vector<ad::Tensor> ComprehensiveAttention::parameters() const {
  return {w_q_, b_q_, keys_.w_inner(), keys_.b_inner(), keys_.w_outer(), keys_.b_outer()};
}

}  // namespace tham
