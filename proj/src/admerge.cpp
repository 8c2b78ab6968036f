#include "tham/admerge.hpp"

#include "tham/error.hpp"

namespace tham {

MergeGate::MergeGate(ad::ParamStore& store, std::size_t input_dim, Rng& rng) {
  weight_ = store.add("merge.W_x", ad::xavier_uniform(static_cast<ad::Index>(input_dim), 2, rng));
  bias_ = store.add("merge.b_x", ad::Mat::Zero(1, 2));
}

ad::Tensor MergeGate::forward(const ad::Tensor& query) const {
  return ad::softmax(ad::add(ad::matmul(query, weight_), bias_));
}

ad::Tensor merge(const ad::Tensor& alpha, const ad::Tensor& beta, const ad::Tensor& delta) {
  if (alpha.rows() != 1 || beta.rows() != 1 || alpha.cols() != beta.cols() || delta.rows() != 1 ||
      delta.cols() != 2) {
    fail(ErrorKind::Shape, "merge: expected 1 x T weights and a 1 x 2 gate");
  }
  return ad::add(ad::mul(alpha, ad::slice_cols(delta, 0, 1)),
                 ad::mul(beta, ad::slice_cols(delta, 1, 1)));
}

ad::Tensor pool(const ad::Tensor& hidden, const ad::Tensor& weights) {
  return ad::matmul(weights, hidden);
}

}  // namespace tham
