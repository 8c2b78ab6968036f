#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D matrix; vectors are 1 x n rows. Operations build a
// graph of shared nodes as they execute, and Tensor::backward() walks that
// graph in reverse topological order, accumulating vector-Jacobian products
// into each input that requires a gradient.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tham/rng.hpp"

namespace tham::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Marks a row index in gather_rows() that yields an all-zero row.
inline constexpr std::int32_t kZeroRow = -1;

class Tensor {
 public:
  struct Node;

  Tensor() = default;

  static Tensor constant(Mat value);
  static Tensor parameter(Mat value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  Index rows() const;
  Index cols() const;
  Index size() const { return rows() * cols(); }

  const Mat& value() const;
  /// Direct write access for optimizers and perturbation checks.
  Mat& mutable_value();
  /// Zero matrix of the value's shape when nothing has been accumulated.
  Mat grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  double item() const;
  const char* op() const;

  void zero_grad();
  /// Seeds d(this)/d(this) = 1 and accumulates into every reachable input.
  /// Only valid on 1 x 1 tensors.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  Mat value;
  Mat grad;  // empty until something flows in
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node& self)> backward;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Flushes subnormal results and operands to zero on this thread for its
/// lifetime (x86 SSE control register; a no-op elsewhere). Saturated sigmoid
/// heads otherwise drive whole gradient chains into slow subnormal arithmetic.
class FlushDenormalsGuard {
 public:
  FlushDenormalsGuard();
  ~FlushDenormalsGuard();
  FlushDenormalsGuard(const FlushDenormalsGuard&) = delete;
  FlushDenormalsGuard& operator=(const FlushDenormalsGuard&) = delete;

 private:
  unsigned int previous_ = 0;
};

enum class Mode { Train, Eval };

// Element-wise binary ops broadcast a 1 x 1, 1 x c or r x 1 operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor gather_rows(const Tensor& a, std::span<const std::int32_t> rows);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);

/// Row-wise softmax.
Tensor softmax(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor relu(const Tensor& a);

/// Inverted dropout; identity in eval mode or at rate 0.
Tensor dropout(const Tensor& a, double rate, Rng& rng, Mode mode);

/// Batch normalization over rows (each column is one feature).
struct BatchNormState {
  Tensor gamma;         // 1 x c, trainable
  Tensor beta;          // 1 x c, trainable
  Tensor running_mean;  // 1 x c, buffer
  Tensor running_var;   // 1 x c, buffer
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Train mode normalizes with batch statistics and folds them into the
/// running estimates; eval mode uses the running estimates only.
Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode);

/// Row-wise layer normalization with per-feature gain and bias (1 x c).
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

/// Mean over rows of the summed binary cross-entropy across columns.
/// Probabilities are clamped to [clamp, 1 - clamp] before the logarithm.
Tensor bce_loss(const Tensor& probs, const Mat& targets, double clamp = 1e-7);

/// bce_loss(sigmoid(logits), targets) as one op. The value is identical; the
/// gradient is (sigmoid(z) - y) / rows everywhere, so it does not vanish on
/// clamped entries.
Tensor sigmoid_bce_loss(const Tensor& logits, const Mat& targets, double clamp = 1e-7);

}  // namespace tham::ad
