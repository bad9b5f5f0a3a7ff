#pragma once

// Define-by-run reverse-mode differentiation over dense row-major float64
// arrays. Every network and loss in the library is expressed with the ops
// below; graphs are rebuilt on every training step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "adah/error.hpp"

namespace adah {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. Rank 1 `{1}` is the scalar shape; all
/// matrix ops work on rank 2.
class Array {
 public:
  Array() : shape_{1}, data_(1, 0.0) {}
  explicit Array(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }
  Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size()) {
      throw DimensionError("array data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Array scalar(double v) { return Array(Shape{1}, std::vector<double>{v}); }
  static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Array(Shape{rows, cols}, std::vector<double>(values));
  }
  static Array zeros_like(const Array& a) { return Array(a.shape_, 0.0); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  double item() const {
    if (data_.size() != 1) throw ContractError("item() on array of shape " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Array&, const Array&) = default;

 private:
  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Graph vertex. `backprop` reads `grad` and accumulates into the parents'
/// grads; it is only invoked when the node requires a gradient.
struct Node {
  Array value;
  Array grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::string op;
  bool requires_grad = false;
  std::function<void(Node&)> backprop;
};

using Var = std::shared_ptr<Node>;

/// Trainable input: receives a gradient.
inline Var leaf(Array value) {
  auto n = std::make_shared<Node>();
  n->grad = Array::zeros_like(value);
  n->value = std::move(value);
  n->op = "leaf";
  n->requires_grad = true;
  return n;
}

/// Frozen input: gradients flow through ops that consume it but stop here.
inline Var constant(Array value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "const";
  return n;
}

namespace detail {

inline Var make_node(Array value, std::vector<Var> parents, std::string op,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad; });
  n->parents = std::move(parents);
  n->op = std::move(op);
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

inline void require_matrix(const Array& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline ConstMatMap view(const Array& a) {
  return ConstMatMap(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}
inline MatMap view(Array& a) {
  return MatMap(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

// out += A·B
inline void gemm_nn(const Array& a, const Array& b, Array& out) { view(out).noalias() += view(a) * view(b); }
// out += A·Bᵀ
inline void gemm_nt(const Array& a, const Array& b, Array& out) {
  view(out).noalias() += view(a) * view(b).transpose();
}
// out += Aᵀ·B
inline void gemm_tn(const Array& a, const Array& b, Array& out) {
  view(out).noalias() += view(a).transpose() * view(b);
}

template <class F, class D>
Var unary(const Var& a, std::string op, F f, D dfdx) {
  Array out = Array::zeros_like(a->value);
  const auto in = a->value.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return make_node(std::move(out), {a}, std::move(op), [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const auto x = p.value.data();
    const auto y = self.value.data();
    const auto g = self.grad.data();
    auto pg = p.grad.data();
    for (std::size_t i = 0; i < x.size(); ++i) pg[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a->value, b->value, "add");
  Array out = a->value;
  auto o = out.data();
  const auto bv = b->value.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return detail::make_node(std::move(out), {a, b}, "add", [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto pg = p->grad.data();
      const auto g = self.grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  });
}

inline Var subtract(const Var& a, const Var& b) {
  detail::require_same_shape(a->value, b->value, "subtract");
  Array out = a->value;
  auto o = out.data();
  const auto bv = b->value.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return detail::make_node(std::move(out), {a, b}, "subtract", [](Node& self) {
    const auto g = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto pg = self.parents[0]->grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto pg = self.parents[1]->grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product.
inline Var multiply(const Var& a, const Var& b) {
  detail::require_same_shape(a->value, b->value, "multiply");
  Array out = a->value;
  auto o = out.data();
  const auto bv = b->value.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return detail::make_node(std::move(out), {a, b}, "multiply", [](Node& self) {
    const auto g = self.grad.data();
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) {
      auto pg = x.grad.data();
      const auto yv = y.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * yv[i];
    }
    if (y.requires_grad) {
      auto pg = y.grad.data();
      const auto xv = x.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * xv[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  return detail::unary(
      a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// |x| with subgradient 0 at x = 0.
inline Var abs(const Var& a) {
  return detail::unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// log(max(x, floor)); the gradient is zero wherever the clamp is active.
inline Var clamped_log(const Var& a, double floor) {
  return detail::unary(
      a, "clamped_log", [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var leaky_relu(const Var& a, double slope) {
  return detail::unary(
      a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Var sum(const Var& a) {
  const auto v = a->value.data();
  double s = 0.0;
  for (double x : v) s += x;
  return detail::make_node(Array::scalar(s), {a}, "sum", [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (double& pg : p.grad.data()) pg += g;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.size())); }

/// [m×k]·[k×n] → [m×n].
inline Var matmul(const Var& a, const Var& b) {
  detail::require_matrix(a->value, "matmul");
  detail::require_matrix(b->value, "matmul");
  if (a->value.cols() != b->value.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a->value.shape()) + " · " +
                         shape_str(b->value.shape()));
  }
  Array out(Shape{a->value.rows(), b->value.cols()});
  detail::gemm_nn(a->value, b->value, out);
  return detail::make_node(std::move(out), {a, b}, "matmul", [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) detail::gemm_nt(self.grad, y.value, x.grad);
    if (y.requires_grad) detail::gemm_tn(x.value, self.grad, y.grad);
  });
}

inline Var transpose(const Var& a) {
  detail::require_matrix(a->value, "transpose");
  const std::size_t m = a->value.rows(), n = a->value.cols();
  Array out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a->value(i, j);
  return detail::make_node(std::move(out), {a}, "transpose", [](Node& self) {
    Node& p = *self.parents[0];
    const std::size_t m = p.value.rows(), n = p.value.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad(i, j) += self.grad(j, i);
  });
}

/// Adds a [1×c] bias row to every row of an [n×c] matrix.
inline Var add_bias(const Var& a, const Var& bias) {
  detail::require_matrix(a->value, "add_bias");
  const std::size_t n = a->value.rows(), c = a->value.cols();
  if (bias->value.size() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias->value.shape()) + " does not fit " +
                         shape_str(a->value.shape()));
  }
  Array out = a->value;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bias->value[j];
  return detail::make_node(std::move(out), {a, bias}, "add_bias", [](Node& self) {
    Node& x = *self.parents[0];
    Node& b = *self.parents[1];
    const auto g = self.grad.data();
    if (x.requires_grad) {
      auto pg = x.grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (b.requires_grad) {
      const std::size_t c = b.value.size();
      for (std::size_t i = 0; i < g.size(); ++i) b.grad[i % c] += g[i];
    }
  });
}

/// Stacks the rows of `a` on top of the rows of `b`.
inline Var concat_rows(const Var& a, const Var& b) {
  detail::require_matrix(a->value, "concat_rows");
  detail::require_matrix(b->value, "concat_rows");
  if (a->value.cols() != b->value.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_str(a->value.shape()) + " vs " +
                         shape_str(b->value.shape()));
  }
  std::vector<double> data(a->value.values());
  data.insert(data.end(), b->value.values().begin(), b->value.values().end());
  Array out(Shape{a->value.rows() + b->value.rows(), a->value.cols()}, std::move(data));
  return detail::make_node(std::move(out), {a, b}, "concat_rows", [](Node& self) {
    const auto g = self.grad.data();
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    const std::size_t split = x.value.size();
    if (x.requires_grad) {
      auto pg = x.grad.data();
      for (std::size_t i = 0; i < split; ++i) pg[i] += g[i];
    }
    if (y.requires_grad) {
      auto pg = y.grad.data();
      for (std::size_t i = split; i < g.size(); ++i) pg[i - split] += g[i];
    }
  });
}

/// Row-wise softmax with max subtraction.
inline Var softmax_rows(const Var& a) {
  detail::require_matrix(a->value, "softmax_rows");
  const std::size_t n = a->value.rows(), c = a->value.cols();
  if (c < 2) throw DimensionError("softmax_rows: need at least 2 columns, got " + shape_str(a->value.shape()));
  Array out(a->value.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto in = a->value.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return detail::make_node(std::move(out), {a}, "softmax_rows", [](Node& self) {
    Node& p = *self.parents[0];
    const std::size_t n = self.value.rows();
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = self.value.row(i);
      const auto g = self.grad.row(i);
      auto pg = p.grad.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < y.size(); ++j) pg[j] += y[j] * (g[j] - dot);
    }
  });
}

/// Gathers single entries (row, col) of a matrix into a [k×1] column.
/// `positions` must be non-empty.
inline Var gather(const Var& a, std::vector<std::pair<std::size_t, std::size_t>> positions) {
  detail::require_matrix(a->value, "gather");
  if (positions.empty()) throw ContractError("gather: empty position list");
  Array out(Shape{positions.size(), 1});
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto [r, c] = positions[k];
    if (r >= a->value.rows() || c >= a->value.cols()) {
      throw DimensionError("gather: position (" + std::to_string(r) + "," + std::to_string(c) +
                           ") outside " + shape_str(a->value.shape()));
    }
    out[k] = a->value(r, c);
  }
  return detail::make_node(std::move(out), {a}, "gather", [pos = std::move(positions)](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t k = 0; k < pos.size(); ++k) p.grad(pos[k].first, pos[k].second) += self.grad[k];
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return subtract(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Fills `grad` of every node reachable from the scalar `root` that requires
/// one. Grads of reachable nodes are reset first, so repeated calls on the same
/// graph are idempotent; within one call contributions accumulate.
inline void backward(const Var& root) {
  if (root->value.shape() != Shape{1}) {
    throw ContractError("backward: root must be scalar, got shape " + shape_str(root->value.shape()));
  }
  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (root->requires_grad) {
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Array::zeros_like(n->value);
  if (!root->requires_grad) return;
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

/// Builds a scalar graph from leaf variables.
using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Max over all coordinates of |analytic − central difference| /
/// max(1, |analytic|, |numeric|).
inline double grad_check(const ScalarFn& f, std::vector<Array> theta, double h = 1e-5) {
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
  auto bind = [](const std::vector<Array>& arrays, bool trainable) {
    std::vector<Var> vars;
    vars.reserve(arrays.size());
    for (const auto& a : arrays) vars.push_back(trainable ? leaf(a) : constant(a));
    return vars;
  };

  const auto leaves = bind(theta, true);
  const Var root = f(leaves);
  backward(root);

  auto eval = [&] { return f(bind(theta, false))->value.item(); };

  double worst = 0.0;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    const Array& analytic = leaves[t]->grad;
    for (std::size_t i = 0; i < theta[t].size(); ++i) {
      const double saved = theta[t][i];
      theta[t][i] = saved + h;
      const double up = eval();
      theta[t][i] = saved - h;
      const double down = eval();
      theta[t][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace adah
