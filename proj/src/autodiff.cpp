#include "tham/autodiff.hpp"

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#endif

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tham/error.hpp"

namespace tham::ad {
namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Tensor::Node>;

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  fail(ErrorKind::Shape, std::string(op) + ": incompatible shapes " +
                             shape_str(a) + " and " + shape_str(b));
}

void accumulate(Tensor::Node& target, const Mat& contribution) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0) {
    target.grad = contribution;
  } else {
    target.grad += contribution;
  }
}

// Zero-initialized gradient of `target` for in-place partial writes.
Mat& grad_buffer(Tensor::Node& target) {
  if (target.grad.size() == 0) target.grad = Mat::Zero(target.value.rows(), target.value.cols());
  return target.grad;
}

Tensor make_result(Mat value, const char* op, std::initializer_list<Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward) {
  auto node = std::make_shared<Tensor::Node>();
  node->value = std::move(value);
  node->op = op;
  node->leaf = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Mat value, const char* op, std::span<const Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward) {
  auto node = std::make_shared<Tensor::Node>();
  node->value = std::move(value);
  node->op = op;
  node->leaf = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Broadcasting: an operand may be 1x1, 1xc or rx1 against the full shape.
bool broadcastable(const Mat& m, Index rows, Index cols) {
  return (m.rows() == rows || m.rows() == 1) && (m.cols() == cols || m.cols() == 1);
}

Mat broadcast_to(const Mat& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Mat::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

Mat reduce_to(const Mat& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Mat::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

void binary_shape(const char* op, const Mat& a, const Mat& b, Index& rows, Index& cols) {
  rows = std::max(a.rows(), b.rows());
  cols = std::max(a.cols(), b.cols());
  if (!broadcastable(a, rows, cols) || !broadcastable(b, rows, cols)) {
    shape_error(op, a, b);
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  Mat out = a.value().unaryExpr(fwd);
  return make_result(std::move(out), op, {a}, [deriv](Tensor::Node& self) {
    auto& in = *self.parents[0];
    if (!in.requires_grad) return;
    Mat local(in.value.rows(), in.value.cols());
    for (Index i = 0; i < local.size(); ++i) {
      local.data()[i] = deriv(in.value.data()[i], self.value.data()[i]);
    }
    accumulate(in, self.grad.cwiseProduct(local));
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return constant(Mat::Constant(1, 1, value)); }

Index Tensor::rows() const { return node_->value.rows(); }
Index Tensor::cols() const { return node_->value.cols(); }
const Mat& Tensor::value() const { return node_->value; }
Mat& Tensor::mutable_value() { return node_->value; }
bool Tensor::has_grad() const { return node_->grad.size() != 0; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
const char* Tensor::op() const { return node_->op; }

Mat Tensor::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(rows(), cols());
  return node_->grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    fail(ErrorKind::Shape, "item: tensor is " + shape_str(value()) + ", expected (1x1)");
  }
  return node_->value(0, 0);
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) {
    fail(ErrorKind::Shape, "backward: root is " + shape_str(value()) + ", expected (1x1)");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->leaf && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass; leaves keep accumulating.
  for (Node* n : order) n->grad.resize(0, 0);
  accumulate(*node_, Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() != 0 && n->backward) n->backward(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
FlushDenormalsGuard::FlushDenormalsGuard() {
#if defined(__SSE__) || defined(__x86_64__)
  previous_ = _mm_getcsr();
  _mm_setcsr(previous_ | 0x8040);  // FTZ | DAZ
#endif
}

FlushDenormalsGuard::~FlushDenormalsGuard() {
#if defined(__SSE__) || defined(__x86_64__)
  _mm_setcsr(previous_);
#endif
}

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  Index r, c;
  binary_shape("add", a.value(), b.value(), r, c);
  Mat out = broadcast_to(a.value(), r, c) + broadcast_to(b.value(), r, c);
  return make_result(std::move(out), "add", {a, b}, [](Tensor::Node& self) {
    auto& x = *self.parents[0];
    auto& y = *self.parents[1];
    accumulate(x, reduce_to(self.grad, x.value.rows(), x.value.cols()));
    accumulate(y, reduce_to(self.grad, y.value.rows(), y.value.cols()));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Index r, c;
  binary_shape("sub", a.value(), b.value(), r, c);
  Mat out = broadcast_to(a.value(), r, c) - broadcast_to(b.value(), r, c);
  return make_result(std::move(out), "sub", {a, b}, [](Tensor::Node& self) {
    auto& x = *self.parents[0];
    auto& y = *self.parents[1];
    accumulate(x, reduce_to(self.grad, x.value.rows(), x.value.cols()));
    accumulate(y, reduce_to(-self.grad, y.value.rows(), y.value.cols()));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Index r, c;
  binary_shape("mul", a.value(), b.value(), r, c);
  Mat out = broadcast_to(a.value(), r, c).cwiseProduct(broadcast_to(b.value(), r, c));
  return make_result(std::move(out), "mul", {a, b}, [r, c](Tensor::Node& self) {
    auto& x = *self.parents[0];
    auto& y = *self.parents[1];
    if (x.requires_grad) {
      Mat g = self.grad.cwiseProduct(broadcast_to(y.value, r, c));
      accumulate(x, reduce_to(g, x.value.rows(), x.value.cols()));
    }
    if (y.requires_grad) {
      Mat g = self.grad.cwiseProduct(broadcast_to(x.value, r, c));
      accumulate(y, reduce_to(g, y.value.rows(), y.value.cols()));
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result(a.value() * factor, "scale", {a}, [factor](Tensor::Node& self) {
    accumulate(*self.parents[0], self.grad * factor);
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  Mat out = a.value().array() + offset;
  return make_result(std::move(out), "add_scalar", {a}, [](Tensor::Node& self) {
    accumulate(*self.parents[0], self.grad);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Mat out = a.value() * b.value();
  return make_result(std::move(out), "matmul", {a, b}, [](Tensor::Node& self) {
    auto& x = *self.parents[0];
    auto& y = *self.parents[1];
    if (x.requires_grad) accumulate(x, self.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * self.grad);
  });
}

Tensor transpose(const Tensor& a) {
  Mat out = a.value().transpose();
  return make_result(std::move(out), "transpose", {a}, [](Tensor::Node& self) {
    accumulate(*self.parents[0], self.grad.transpose());
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::Shape, "concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Mat out(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(out), "concat_cols", parts, [](Tensor::Node& self) {
    Index offset = 0;
    for (auto& parent : self.parents) {
      const Index width = parent->value.cols();
      if (parent->requires_grad) accumulate(*parent, self.grad.middleCols(offset, width));
      offset += width;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::Shape, "concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Mat out(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result(std::move(out), "concat_rows", parts, [](Tensor::Node& self) {
    Index offset = 0;
    for (auto& parent : self.parents) {
      const Index height = parent->value.rows();
      if (parent->requires_grad) accumulate(*parent, self.grad.middleRows(offset, height));
      offset += height;
    }
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    fail(ErrorKind::Shape, "slice_cols: range [" + std::to_string(start) + ", " +
                               std::to_string(start + count) + ") outside " +
                               shape_str(a.value()));
  }
  Mat out = a.value().middleCols(start, count);
  return make_result(std::move(out), "slice_cols", {a}, [start, count](Tensor::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) grad_buffer(in).middleCols(start, count) += self.grad;
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    fail(ErrorKind::Shape, "slice_rows: range [" + std::to_string(start) + ", " +
                               std::to_string(start + count) + ") outside " +
                               shape_str(a.value()));
  }
  Mat out = a.value().middleRows(start, count);
  return make_result(std::move(out), "slice_rows", {a}, [start, count](Tensor::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) grad_buffer(in).middleRows(start, count) += self.grad;
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::int32_t> rows) {
  const Index n = static_cast<Index>(rows.size());
  Mat out = Mat::Zero(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    if (r == kZeroRow) continue;
    if (r < 0 || r >= a.rows()) {
      fail(ErrorKind::Shape, "gather_rows: index " + std::to_string(r) + " outside " +
                                 shape_str(a.value()));
    }
    out.row(i) = a.value().row(r);
  }
  std::vector<std::int32_t> idx(rows.begin(), rows.end());
  return make_result(std::move(out), "gather_rows", {a}, [idx = std::move(idx)](Tensor::Node& self) {
    auto& in = *self.parents[0];
    if (!in.requires_grad) return;
    Mat& g = grad_buffer(in);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] != kZeroRow) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
  });
}

Tensor sum(const Tensor& a) {
  return make_result(Mat::Constant(1, 1, a.value().sum()), "sum", {a}, [](Tensor::Node& self) {
    auto& in = *self.parents[0];
    accumulate(in, Mat::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  return make_result(Mat::Constant(1, 1, a.value().sum() / n), "mean", {a},
                     [n](Tensor::Node& self) {
                       auto& in = *self.parents[0];
                       accumulate(in, Mat::Constant(in.value.rows(), in.value.cols(),
                                                    self.grad(0, 0) / n));
                     });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) fail(ErrorKind::Shape, "mean_rows: no rows");
  const double n = static_cast<double>(a.rows());
  Mat out = a.value().colwise().sum() / n;
  return make_result(std::move(out), "mean_rows", {a}, [n](Tensor::Node& self) {
    auto& in = *self.parents[0];
    accumulate(in, (self.grad / n).replicate(in.value.rows(), 1));
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Tensor softmax(const Tensor& a) {
  Mat out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double peak = a.value().row(r).maxCoeff();
    auto e = (a.value().row(r).array() - peak).exp();
    out.row(r) = e / e.sum();
  }
  return make_result(std::move(out), "softmax", {a}, [](Tensor::Node& self) {
    auto& in = *self.parents[0];
    Mat g(self.value.rows(), self.value.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      const double dot = self.grad.row(r).dot(self.value.row(r));
      g.row(r) = self.value.row(r).array() * (self.grad.row(r).array() - dot);
    }
    accumulate(in, g);
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, "sin", [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      a, "cos", [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, "leaky_relu", [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor dropout(const Tensor& a, double rate, Rng& rng, Mode mode) {
  if (mode == Mode::Eval || rate <= 0.0) return a;
  if (rate >= 1.0) fail(ErrorKind::Invalid, "dropout: rate must be < 1");
  Mat keep(a.rows(), a.cols());
  const double inv = 1.0 / (1.0 - rate);
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.bernoulli(rate) ? 0.0 : inv;
  return mul(a, Tensor::constant(std::move(keep)));
}

// ---------------------------------------------------------------------------
// Normalization

Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode) {
  const Index n = x.rows();
  const Index c = x.cols();
  if (state.gamma.cols() != c) {
    shape_error("batchnorm", x.value(), state.gamma.value());
  }
  if (n == 0) fail(ErrorKind::Shape, "batchnorm: no rows");
  const Mat& gamma = state.gamma.value();

  if (mode == Mode::Eval) {
    Mat inv_std = (state.running_var.value().array() + state.eps).rsqrt().matrix();
    Mat xhat = (x.value().rowwise() - state.running_mean.value().row(0)).array().rowwise() *
               inv_std.row(0).array();
    Mat out = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() +
              state.beta.value().row(0).array();
    return make_result(
        std::move(out), "batchnorm", {x, state.gamma, state.beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std)](Tensor::Node& self) {
          auto& in = *self.parents[0];
          auto& g = *self.parents[1];
          auto& b = *self.parents[2];
          if (in.requires_grad) {
            Mat dx = self.grad.array().rowwise() * (g.value.row(0).array() * inv_std.row(0).array());
            accumulate(in, dx);
          }
          if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
          if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
        });
  }

  Mat mu = x.value().colwise().mean();
  Mat centered = x.value().rowwise() - mu.row(0);
  Mat var = centered.array().square().colwise().mean();
  Mat inv_std = (var.array() + state.eps).rsqrt().matrix();
  Mat xhat = centered.array().rowwise() * inv_std.row(0).array();
  Mat out = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() +
            state.beta.value().row(0).array();

  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  Mat& rm = state.running_mean.mutable_value();
  Mat& rv = state.running_var.mutable_value();
  rm = (1.0 - state.momentum) * rm + state.momentum * mu;
  rv = (1.0 - state.momentum) * rv + state.momentum * unbias * var;

  return make_result(
      std::move(out), "batchnorm", {x, state.gamma, state.beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tensor::Node& self) {
        auto& in = *self.parents[0];
        auto& g = *self.parents[1];
        auto& b = *self.parents[2];
        if (in.requires_grad) {
          Mat dxhat = self.grad.array().rowwise() * g.value.row(0).array();
          Mat sum_d = dxhat.colwise().sum();
          Mat sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Mat dx(dxhat.rows(), dxhat.cols());
          const double dn = static_cast<double>(n);
          for (Index r = 0; r < dx.rows(); ++r) {
            dx.row(r) = (dn * dxhat.row(r).array() - sum_d.row(0).array() -
                         xhat.row(r).array() * sum_dx.row(0).array()) *
                        inv_std.row(0).array() / dn;
          }
          accumulate(in, dx);
        }
        if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
        if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
      });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index c = x.cols();
  if (gain.cols() != c || bias.cols() != c) shape_error("layernorm", x.value(), gain.value());
  Mat mu = x.value().rowwise().mean();
  Mat centered = x.value().colwise() - mu.col(0);
  Mat var = centered.array().square().rowwise().mean();
  Mat inv_std = (var.array() + eps).rsqrt().matrix();
  Mat xhat = centered.array().colwise() * inv_std.col(0).array();
  Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
            bias.value().row(0).array();
  return make_result(
      std::move(out), "layernorm", {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), c](Tensor::Node& self) {
        auto& in = *self.parents[0];
        auto& g = *self.parents[1];
        auto& b = *self.parents[2];
        if (in.requires_grad) {
          Mat dxhat = self.grad.array().rowwise() * g.value.row(0).array();
          Mat sum_d = dxhat.rowwise().sum();
          Mat sum_dx = dxhat.cwiseProduct(xhat).rowwise().sum();
          const double dc = static_cast<double>(c);
          Mat dx = ((dc * dxhat).colwise() - sum_d.col(0)).array() -
                   xhat.array().colwise() * sum_dx.col(0).array();
          dx = dx.array().colwise() * (inv_std.col(0).array() / dc);
          accumulate(in, dx);
        }
        if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
        if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
      });
}

// ---------------------------------------------------------------------------
// Loss

Tensor bce_loss(const Tensor& probs, const Mat& targets, double clamp) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    shape_error("bce_loss", probs.value(), targets);
  }
  const Index n = probs.rows();
  if (n == 0) fail(ErrorKind::Shape, "bce_loss: empty batch");
  double total = 0.0;
  const Mat& p = probs.value();
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.data()[i], clamp, 1.0 - clamp);
    const double y = targets.data()[i];
    total += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  const double dn = static_cast<double>(n);
  return make_result(Mat::Constant(1, 1, -total / dn), "bce_loss", {probs},
                     [targets, clamp, dn](Tensor::Node& self) {
                       auto& in = *self.parents[0];
                       Mat g(in.value.rows(), in.value.cols());
                       const double up = self.grad(0, 0);
                       for (Index i = 0; i < g.size(); ++i) {
                         const double raw = in.value.data()[i];
                         if (raw < clamp || raw > 1.0 - clamp) {
                           g.data()[i] = 0.0;
                           continue;
                         }
                         const double y = targets.data()[i];
                         g.data()[i] = -up * (y / raw - (1.0 - y) / (1.0 - raw)) / dn;
                       }
                       accumulate(in, g);
                     });
}

Tensor sigmoid_bce_loss(const Tensor& logits, const Mat& targets, double clamp) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    shape_error("sigmoid_bce_loss", logits.value(), targets);
  }
  const Index n = logits.rows();
  if (n == 0) fail(ErrorKind::Shape, "sigmoid_bce_loss: empty batch");
  const Mat& z = logits.value();
  Mat p(z.rows(), z.cols());
  double total = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    const double x = z.data()[i];
    const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    p.data()[i] = s;
    const double q = std::clamp(s, clamp, 1.0 - clamp);
    const double y = targets.data()[i];
    total += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  const double dn = static_cast<double>(n);
  return make_result(Mat::Constant(1, 1, -total / dn), "sigmoid_bce_loss", {logits},
                     [targets, p = std::move(p), dn](Tensor::Node& self) {
                       auto& in = *self.parents[0];
                       accumulate(in, ((p - targets) * (self.grad(0, 0) / dn)).eval());
                     });
}

}  // namespace tham::ad
