#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "cotpd/error.hpp"

// Minimal reverse-mode differentiation over dense row-major matrices. Each op
// records its inputs and a closure that pushes the output gradient back into
// them; backward() walks the graph in reverse topological order.
namespace cotpd::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline constexpr double kProbFloor = 1e-12;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double scalar() const { return node_->value(0, 0); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  void zero_grad() { node_->grad.setZero(node_->value.rows(), node_->value.cols()); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(std::move(n));
}

/// A trainable leaf; its gradient persists across backward() calls.
inline Var parameter(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  n->requires_grad = true;
  n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  return Var(std::move(n));
}

namespace detail {
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

inline Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!grad_enabled()) return Var(std::move(n));
  for (auto& in : inputs) {
    n->requires_grad = n->requires_grad || in.requires_grad();
    n->inputs.push_back(in.shared());
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Var(std::move(n));
}

inline void shape_check(bool ok, const char* op, const Var& a, const Var& b) {
  if (!ok)
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace detail

/// Copy of `a` that blocks gradient flow.
inline Var detach(const Var& a) { return constant(a.value()); }

inline Var matmul(const Var& a, const Var& b) {
  detail::shape_check(a.cols() == b.rows(), "matmul", a, b);
  return detail::make(a.value() * b.value(), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (detail::wants(x)) x->accumulate(self.grad * y->value.transpose());
    if (detail::wants(y)) y->accumulate(x->value.transpose() * self.grad);
  });
}

/// a · bᵀ
inline Var matmul_t(const Var& a, const Var& b) {
  detail::shape_check(a.cols() == b.cols(), "matmul_t", a, b);
  return detail::make(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (detail::wants(x)) x->accumulate(self.grad * y->value);
    if (detail::wants(y)) y->accumulate(self.grad.transpose() * x->value);
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::shape_check(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  return detail::make(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (detail::wants(in)) in->accumulate(self.grad);
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make(a.value() * s, {a}, [s](Node& self) { self.inputs[0]->accumulate(self.grad * s); });
}

/// Adds the 1×c row `bias` to every row of `a`.
inline Var add_row(const Var& a, const Var& bias) {
  detail::shape_check(bias.rows() == 1 && bias.cols() == a.cols(), "add_row", a, bias);
  Matrix v = a.value();
  v.rowwise() += bias.value().row(0);
  return detail::make(std::move(v), {a, bias}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& b = self.inputs[1];
    if (detail::wants(x)) x->accumulate(self.grad);
    if (detail::wants(b)) b->accumulate(self.grad.colwise().sum());
  });
}

/// tanh-approximated GELU.
inline Var gelu(const Var& a) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Matrix& x = a.value();
  Matrix inner = c * (x.array() + 0.044715 * x.array().cube()).matrix();
  Matrix t = inner.array().tanh().matrix();
  Matrix y = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return detail::make(std::move(y), {a}, [t = std::move(t)](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    auto dinner = c * (1.0 + 3.0 * 0.044715 * x.array().square());
    auto dy = 0.5 * (1.0 + t.array()) + 0.5 * x.array() * (1.0 - t.array().square()) * dinner;
    self.inputs[0]->accumulate((self.grad.array() * dy).matrix());
  });
}

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Var softmax_rows(const Var& a) {
  Matrix y = softmax_rows_value(a.value());
  return detail::make(y, {a}, [y](Node& self) {
    Eigen::VectorXd dot = (self.grad.array() * y.array()).rowwise().sum();
    Matrix g = (y.array() * (self.grad.colwise() - dot).array()).matrix();
    self.inputs[0]->accumulate(g);
  });
}

inline Var log_softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    double lse = m + std::log((y.row(r).array() - m).exp().sum());
    y.row(r).array() -= lse;
  }
  Matrix p = y.array().exp().matrix();
  return detail::make(std::move(y), {a}, [p = std::move(p)](Node& self) {
    Eigen::VectorXd total = self.grad.rowwise().sum();
    Matrix g = self.grad - (p.array().colwise() * total.array()).matrix();
    self.inputs[0]->accumulate(g);
  });
}

/// Row-wise layer normalization with learned 1×c gain and bias.
inline Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5) {
  detail::shape_check(gain.cols() == a.cols() && bias.cols() == a.cols(), "layer_norm", a, gain);
  const Matrix& x = a.value();
  const auto c = static_cast<double>(x.cols());
  Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / c) + eps).rsqrt();
  Matrix xhat = (centered.array().colwise() * inv_std.array()).matrix();
  Matrix y = xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  return detail::make(std::move(y), {a, gain, bias},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std), c](Node& self) {
                        auto& in = self.inputs[0];
                        auto& g = self.inputs[1];
                        auto& b = self.inputs[2];
                        if (detail::wants(g)) g->accumulate((self.grad.array() * xhat.array()).colwise().sum().matrix());
                        if (detail::wants(b)) b->accumulate(self.grad.colwise().sum());
                        if (detail::wants(in)) {
                          Matrix dxhat = self.grad;
                          dxhat.array().rowwise() *= g->value.row(0).array();
                          Eigen::VectorXd m1 = dxhat.rowwise().mean();
                          Eigen::VectorXd m2 = (dxhat.array() * xhat.array()).rowwise().mean();
                          Matrix dx = dxhat;
                          dx.colwise() -= m1;
                          dx -= (xhat.array().colwise() * m2.array()).matrix();
                          dx.array().colwise() *= inv_std.array();
                          in->accumulate(dx);
                        }
                        (void)c;
                      });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0, cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::shape_check(p.cols() == cols, "concat_rows", parts.front(), p);
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return detail::make(std::move(v), parts, [](Node& self) {
    Eigen::Index r = 0;
    for (auto& in : self.inputs) {
      auto n = in->value.rows();
      if (detail::wants(in)) in->accumulate(self.grad.middleRows(r, n));
      r += n;
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index rows = parts.front().rows(), cols = 0;
  for (const auto& p : parts) {
    detail::shape_check(p.rows() == rows, "concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return detail::make(std::move(v), parts, [](Node& self) {
    Eigen::Index c = 0;
    for (auto& in : self.inputs) {
      auto n = in->value.cols();
      if (detail::wants(in)) in->accumulate(self.grad.middleCols(c, n));
      c += n;
    }
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + "," + std::to_string(start + count) +
                     ") outside " + std::to_string(a.rows()) + " rows");
  return detail::make(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    g.middleRows(start, count) = self.grad;
    in->accumulate(g);
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return detail::make(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    g.middleCols(start, count) = self.grad;
    in->accumulate(g);
  });
}

/// Rows of `table` selected by `ids` (embedding lookup).
inline Var gather_rows(const Var& table, const std::vector<std::size_t>& ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= static_cast<std::size_t>(table.rows())) throw ShapeError("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(static_cast<Eigen::Index>(ids[i]));
  }
  return detail::make(std::move(v), {table}, [ids](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      g.row(static_cast<Eigen::Index>(ids[i])) += self.grad.row(static_cast<Eigen::Index>(i));
    in->accumulate(g);
  });
}

/// 1×c mean of the rows of `a`.
inline Var mean_rows(const Var& a) {
  const auto n = static_cast<double>(a.rows());
  return detail::make(a.value().colwise().mean(), {a}, [n](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = self.grad.replicate(in->value.rows(), 1) / n;
    in->accumulate(g);
  });
}

/// Scalar sum of scalars, each weighted.
inline Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].scalar();
  Matrix v(1, 1);
  v(0, 0) = total;
  return detail::make(std::move(v), terms, [weights](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (detail::wants(self.inputs[i])) self.inputs[i]->accumulate(self.grad * weights[i]);
  });
}

/// nll + alpha·cpd as a scalar node whose value is computed with exactly that
/// floating-point expression.
inline Var combine_losses(const Var& nll, const Var& cpd, double alpha) {
  Matrix v(1, 1);
  v(0, 0) = nll.scalar() + alpha * cpd.scalar();
  return detail::make(std::move(v), {nll, cpd}, [alpha](Node& self) {
    if (detail::wants(self.inputs[0])) self.inputs[0]->accumulate(self.grad);
    if (detail::wants(self.inputs[1])) self.inputs[1]->accumulate(self.grad * alpha);
  });
}

/// Mean over rows of KL(P‖Q) given row-wise log-probabilities. Log values
/// below log(1e-12) are clamped (and receive no gradient).
inline Var kl_rows_mean(const Var& log_p, const Var& log_q) {
  detail::shape_check(log_p.rows() == log_q.rows() && log_p.cols() == log_q.cols(), "kl_rows_mean", log_p, log_q);
  const double floor = std::log(kProbFloor);
  Matrix lp = log_p.value().cwiseMax(floor);
  Matrix lq = log_q.value().cwiseMax(floor);
  Matrix p = lp.array().exp().matrix();
  const auto n = static_cast<double>(lp.rows());
  Matrix v(1, 1);
  v(0, 0) = (p.array() * (lp - lq).array()).sum() / n;
  return detail::make(std::move(v), {log_p, log_q}, [p, lp, lq, n, floor](Node& self) {
    const double g = self.grad(0, 0) / n;
    auto& a = self.inputs[0];
    auto& b = self.inputs[1];
    if (detail::wants(a)) {
      Matrix ga = (g * p.array() * ((lp - lq).array() + 1.0)).matrix();
      ga = (a->value.array() < floor).select(0.0, ga);
      a->accumulate(ga);
    }
    if (detail::wants(b)) {
      Matrix gb = (-g * p.array()).matrix();
      gb = (b->value.array() < floor).select(0.0, gb);
      b->accumulate(gb);
    }
  });
}

/// Mean over rows of −log P[row, gold[row]], with the same clamp.
inline Var nll_rows_mean(const Var& log_p, const std::vector<std::size_t>& gold) {
  if (static_cast<Eigen::Index>(gold.size()) != log_p.rows())
    throw ShapeError("nll: " + std::to_string(gold.size()) + " labels for " + std::to_string(log_p.rows()) + " rows");
  const double floor = std::log(kProbFloor);
  const auto n = static_cast<double>(gold.size());
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= static_cast<std::size_t>(log_p.cols())) throw LabelError("gold label index out of range");
    total -= std::max(log_p.value()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(gold[i])), floor);
  }
  Matrix v(1, 1);
  v(0, 0) = total / n;
  return detail::make(std::move(v), {log_p}, [gold, n, floor](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    for (std::size_t i = 0; i < gold.size(); ++i) {
      auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(gold[i]);
      if (in->value(r, c) >= floor) g(r, c) = -self.grad(0, 0) / n;
    }
    in->accumulate(g);
  });
}

/// Back-propagates d(output)/d(output) = 1 through the graph.
inline void backward(const Var& output) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  output.node()->grad = Matrix::Ones(output.rows(), output.cols());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

/// Leaf nodes that `output` depends on and that require gradients.
inline std::unordered_set<const Node*> trainable_leaves(const Var& output) {
  std::unordered_set<const Node*> leaves, seen;
  std::vector<const Node*> stack{output.node()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->inputs.empty() && n->requires_grad) leaves.insert(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  return leaves;
}

}  // namespace cotpd::ad
