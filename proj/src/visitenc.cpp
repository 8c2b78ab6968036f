#include "tham/visitenc.hpp"

#include <cmath>

#include "tham/error.hpp"

namespace tham {

ad::Tensor visit_mean(std::span<const CodeId> codes, const ad::Tensor& code_features) {
  if (codes.empty()) fail(ErrorKind::Invalid, "visit_mean: visit has no codes");
  std::vector<std::int32_t> rows(codes.begin(), codes.end());
  return ad::mean_rows(ad::gather_rows(code_features, rows));
}

ad::Tensor visit_means(std::span<const Visit> history, const ad::Tensor& code_features) {
  if (history.empty()) fail(ErrorKind::Invalid, "visit_means: empty history");
  std::vector<std::int32_t> rows;
  for (const Visit& v : history) {
    if (v.codes.empty()) fail(ErrorKind::Invalid, "visit_means: visit has no codes");
    rows.insert(rows.end(), v.codes.begin(), v.codes.end());
  }
  ad::Mat averaging = ad::Mat::Zero(static_cast<ad::Index>(history.size()),
                                    static_cast<ad::Index>(rows.size()));
  ad::Index col = 0;
  for (std::size_t t = 0; t < history.size(); ++t) {
    const double w = 1.0 / static_cast<double>(history[t].codes.size());
    for (std::size_t i = 0; i < history[t].codes.size(); ++i) {
      averaging(static_cast<ad::Index>(t), col++) = w;
    }
  }
  return ad::matmul(ad::Tensor::constant(std::move(averaging)),
                    ad::gather_rows(code_features, rows));
}

ad::Mat positional_encoding(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) {
    fail(ErrorKind::Config, "positional encoding needs an even dimension, got " + std::to_string(dim));
  }
  ad::Mat pos(static_cast<ad::Index>(length), static_cast<ad::Index>(dim));
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(t) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pos(static_cast<ad::Index>(t), static_cast<ad::Index>(2 * i)) = std::sin(angle);
      pos(static_cast<ad::Index>(t), static_cast<ad::Index>(2 * i + 1)) = std::cos(angle);
    }
  }
  return pos;
}

IntervalGate::IntervalGate(ad::ParamStore& store, const Names& names, std::size_t width,
                           std::size_t out_dim, double time_scale, Rng& rng)
    : time_scale_(time_scale) {
  const auto a = static_cast<ad::Index>(width);
  const auto o = static_cast<ad::Index>(out_dim);
  w_inner_ = store.add(names.w_inner, ad::xavier_uniform(1, a, rng));
  b_inner_ = store.add(names.b_inner, ad::Mat::Zero(1, a));
  w_outer_ = store.add(names.w_outer, ad::xavier_uniform(a, o, rng));
  b_outer_ = store.add(names.b_outer, ad::Mat::Zero(1, o));
}

ad::Tensor IntervalGate::forward(std::span<const std::int64_t> intervals) const {
  ad::Mat scaled(static_cast<ad::Index>(intervals.size()), 1);
  for (std::size_t t = 0; t < intervals.size(); ++t) {
    scaled(static_cast<ad::Index>(t), 0) = static_cast<double>(intervals[t]) / time_scale_;
  }
  const ad::Tensor inner =
      ad::add(ad::matmul(ad::Tensor::constant(std::move(scaled)), w_inner_), b_inner_);
  const ad::Tensor shaped = ad::add_scalar(ad::scale(ad::tanh(ad::square(inner)), -1.0), 1.0);
  return ad::add(ad::matmul(shaped, w_outer_), b_outer_);
}

ad::Tensor encode_sequence(std::span<const Visit> history, std::span<const std::int64_t> intervals,
                           const ad::Tensor& code_features, const IntervalGate* gate) {
  if (history.size() != intervals.size()) {
    fail(ErrorKind::Invalid, "encode_sequence: history and intervals differ in length");
  }
  ad::Tensor rows = visit_means(history, code_features);
  if (gate != nullptr) rows = ad::add(rows, gate->forward(intervals));
  return ad::add(rows, ad::Tensor::constant(positional_encoding(
                           history.size(), static_cast<std::size_t>(code_features.cols()))));
}

}  // namespace tham
