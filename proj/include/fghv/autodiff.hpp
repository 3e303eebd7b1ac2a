#pragma once

// Define-by-run reverse-mode differentiation over small dense tensors.
//
// A Tensor is a shared handle to a graph node. Every op returns a new node
// whose parents are its inputs; the graph lives as long as some handle to its
// root does. Values are stored as row-major Eigen matrices:
//   rank 0  -> 1x1
//   rank 1  -> 1xn (a row)
//   rank 2  -> rows x cols
//   rank >2 -> (product of leading dims) x last dim
// Gradients have the same storage layout as values.

#include <Eigen/Dense>

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

#include "fghv/errors.hpp"

namespace fghv::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         std::multiplies<>());
}

inline std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  const Index cols = shape.back();
  return {numel(shape) / std::max<Index>(cols, 1), cols};
}

namespace detail {

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Shape shape;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into the parents. Empty for leaves.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (!has_grad) {
      grad = g;
      has_grad = true;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() : Tensor(Shape{}, Mat::Zero(1, 1), false) {}

  Tensor(Shape shape, std::span<const Scalar> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<Scalar>>()) {
    if (numel(shape) != static_cast<Index>(data.size())) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape));
    }
    const auto [r, c] = storage_dims(shape);
    node_->value = Eigen::Map<const Mat>(data.data(), r, c);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::initializer_list<Scalar> data,
         bool requires_grad = false)
      : Tensor(std::move(shape),
               std::span<const Scalar>(data.begin(), data.size()),
               requires_grad) {}

  Tensor(Shape shape, Mat value, bool requires_grad)
      : node_(std::make_shared<detail::Node<Scalar>>()) {
    const auto [r, c] = storage_dims(shape);
    if (value.rows() != r || value.cols() != c) {
      throw DimensionError("tensor storage " + std::to_string(value.rows()) +
                           "x" + std::to_string(value.cols()) +
                           " does not match shape " + to_string(shape));
    }
    node_->value = std::move(value);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    return Tensor(Shape{}, Mat::Constant(1, 1, v), requires_grad);
  }

  static Tensor vector(std::initializer_list<Scalar> v,
                       bool requires_grad = false) {
    return Tensor(Shape{static_cast<Index>(v.size())},
                  std::span<const Scalar>(v.begin(), v.size()), requires_grad);
  }

  /// Rank-2 tensor holding a copy of an Eigen expression.
  template <typename Derived>
  static Tensor matrix(const Eigen::MatrixBase<Derived>& m,
                       bool requires_grad = false) {
    return Tensor(Shape{m.rows(), m.cols()}, Mat(m), requires_grad);
  }

  /// Rank-1 tensor from an Eigen vector expression (row or column).
  template <typename Derived>
  static Tensor row(const Eigen::MatrixBase<Derived>& v,
                    bool requires_grad = false) {
    Mat m(1, v.size());
    for (Index i = 0; i < v.size(); ++i) m(0, i) = v(i);
    return Tensor(Shape{v.size()}, std::move(m), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }

  const Mat& value() const { return node_->value; }

  /// In-place access for leaf updates (optimizers). Mutating a tensor that
  /// already feeds a recorded graph invalidates that graph.
  Mat& mutable_value() {
    if (!node_->is_leaf()) {
      throw ContractError("mutable_value() on a non-leaf tensor");
    }
    return node_->value;
  }

  std::span<const Scalar> data() const {
    return {node_->value.data(), static_cast<std::size_t>(node_->value.size())};
  }

  Scalar item() const {
    if (size() != 1) {
      throw ContractError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return node_->has_grad; }

  const Mat& grad() const {
    if (!node_->has_grad) {
      throw ContractError("tensor of shape " + to_string(shape()) +
                          " has no gradient");
    }
    return node_->grad;
  }

  void zero_grad() {
    node_->grad.resize(0, 0);
    node_->has_grad = false;
  }

  /// Leaf copy of the current value, detached from any graph.
  Tensor detach(bool requires_grad = false) const {
    return Tensor(shape(), node_->value, requires_grad);
  }

  const NodePtr& node() const { return node_; }

  // Builds an op result. The graph edge is recorded only when some input
  // requires a gradient.
  static Tensor make_result(Shape shape, Mat value,
                            std::vector<NodePtr> parents,
                            std::function<void(detail::Node<Scalar>&)> fn) {
    Tensor out(std::move(shape), std::move(value), false);
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      out.node_->requires_grad = true;
      out.node_->parents = std::move(parents);
      out.node_->backward = std::move(fn);
    }
    return out;
  }

 private:
  NodePtr node_;
};

/// Runs reverse accumulation from a scalar loss. Leaf gradients accumulate
/// across calls; interior gradients are recomputed. Returns the number of
/// graph nodes processed (each reachable node exactly once).
template <typename Scalar>
std::size_t backward(const Tensor<Scalar>& loss) {
  using NodeT = detail::Node<Scalar>;
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(loss.shape()));
  }
  NodeT* root = loss.node().get();
  if (!root->requires_grad) return 0;

  // Iterative post-order DFS; parents are visited in insertion order so the
  // resulting order is deterministic.
  std::vector<NodeT*> order;
  std::unordered_set<const NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order) {
    if (!n->is_leaf()) {
      n->grad.setZero(n->value.rows(), n->value.cols());
      n->has_grad = true;
    }
  }
  root->accumulate(Matrix<Scalar>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
  return order.size();
}

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) +
                         " vs " + to_string(b));
  }
}

inline void require_rank_at_most_2(const Shape& s, const char* op) {
  if (s.size() > 2) {
    throw DimensionError(std::string(op) + ": expected rank <= 2, got " +
                         to_string(s));
  }
}

// Output shape of a row-wise reduction: one entry per stored row.
inline Shape row_reduced_shape(const Shape& s) {
  return s.size() <= 1 ? Shape{} : Shape{s[0]};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  return Tensor<Scalar>::make_result(
      a.shape(), a.value() + b.value(), {a.node(), b.node()},
      [](detail::Node<Scalar>& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
      });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  return Tensor<Scalar>::make_result(
      a.shape(), a.value() - b.value(), {a.node(), b.node()},
      [](detail::Node<Scalar>& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(-n.grad);
      });
}

/// Hadamard product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  return Tensor<Scalar>::make_result(
      a.shape(), a.value().cwiseProduct(b.value()), {a.node(), b.node()},
      [](detail::Node<Scalar>& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        n.parents[0]->accumulate(n.grad.cwiseProduct(bv));
        n.parents[1]->accumulate(n.grad.cwiseProduct(av));
      });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  return Tensor<Scalar>::make_result(
      a.shape(), a.value() * s, {a.node()},
      [s](detail::Node<Scalar>& n) { n.parents[0]->accumulate(n.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mul(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
  return scale(a, s);
}

/// max(x, slope*x). The subgradient at exactly 0 is `slope`.
template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  typename Tensor<Scalar>::Mat out =
      x.value().unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; });
  return Tensor<Scalar>::make_result(
      x.shape(), std::move(out), {x.node()}, [slope](detail::Node<Scalar>& n) {
        const auto& xv = n.parents[0]->value;
        n.parents[0]->accumulate(n.grad.binaryExpr(
            xv, [slope](Scalar g, Scalar v) { return v > 0 ? g : slope * g; }));
      });
}

/// ln(1 + e^x), evaluated without overflow.
template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) {
  using std::exp;
  using std::log1p;
  typename Tensor<Scalar>::Mat out = x.value().unaryExpr([](Scalar v) {
    return v > 0 ? v + log1p(exp(-v)) : log1p(exp(v));
  });
  return Tensor<Scalar>::make_result(
      x.shape(), std::move(out), {x.node()}, [](detail::Node<Scalar>& n) {
        const auto& xv = n.parents[0]->value;
        n.parents[0]->accumulate(n.grad.binaryExpr(xv, [](Scalar g, Scalar v) {
          const Scalar sig = v >= 0 ? Scalar(1) / (Scalar(1) + exp(-v))
                                    : exp(v) / (Scalar(1) + exp(v));
          return g * sig;
        }));
      });
}

/// Clamps to [-1, 1] with a pass-through gradient. Only meant to absorb
/// rounding overshoot of quantities that are bounded mathematically.
template <typename Scalar>
Tensor<Scalar> clamp_unit(const Tensor<Scalar>& x) {
  typename Tensor<Scalar>::Mat out = x.value().cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  return Tensor<Scalar>::make_result(
      x.shape(), std::move(out), {x.node()},
      [](detail::Node<Scalar>& n) { n.parents[0]->accumulate(n.grad); });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) +
                         " as " + to_string(shape));
  }
  const auto [r, c] = storage_dims(shape);
  typename Tensor<Scalar>::Mat out =
      Eigen::Map<const typename Tensor<Scalar>::Mat>(x.value().data(), r, c);
  return Tensor<Scalar>::make_result(
      std::move(shape), std::move(out), {x.node()},
      [](detail::Node<Scalar>& n) {
        const auto& pv = n.parents[0]->value;
        n.parents[0]->accumulate(Eigen::Map<const typename Tensor<Scalar>::Mat>(
            n.grad.data(), pv.rows(), pv.cols()));
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  return Tensor<Scalar>::make_result(
      Shape{}, Matrix<Scalar>::Constant(1, 1, x.value().sum()), {x.node()},
      [](detail::Node<Scalar>& n) {
        const auto& pv = n.parents[0]->value;
        n.parents[0]->accumulate(
            Matrix<Scalar>::Constant(pv.rows(), pv.cols(), n.grad(0, 0)));
      });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

/// Unbiased (divisor n-1) variance of each row. A rank-1 input yields a
/// scalar; a rank-2 input yields one entry per row.
template <typename Scalar>
Tensor<Scalar> row_variance(const Tensor<Scalar>& x) {
  detail::require_rank_at_most_2(x.shape(), "row_variance");
  const Index n = x.cols();
  if (n < 2) {
    throw ContractError("row_variance needs at least 2 columns, got " +
                        std::to_string(n));
  }
  // Centering on the first column keeps the variance of equal entries exactly 0.
  const Matrix<Scalar> shifted = x.value().colwise() - x.value().col(0);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mu = shifted.rowwise().mean();
  const Matrix<Scalar> centered = shifted.colwise() - mu;
  Matrix<Scalar> var =
      centered.rowwise().squaredNorm().transpose() / static_cast<Scalar>(n - 1);
  return Tensor<Scalar>::make_result(
      detail::row_reduced_shape(x.shape()), std::move(var), {x.node()},
      [centered, n](detail::Node<Scalar>& node) {
        // d var_r / d x_rc = 2 (x_rc - mean_r) / (n - 1)
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = node.grad.transpose();
        node.parents[0]->accumulate(
            (centered.array().colwise() * g.array()).matrix() *
            (Scalar(2) / static_cast<Scalar>(n - 1)));
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// a (m x k) times b (k x n).
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  return Tensor<Scalar>::make_result(
      Shape{a.rows(), b.cols()}, a.value() * b.value(), {a.node(), b.node()},
      [](detail::Node<Scalar>& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
          n.parents[0]->accumulate(n.grad * bv.transpose());
        if (n.parents[1]->requires_grad)
          n.parents[1]->accumulate(av.transpose() * n.grad);
      });
}

/// a (m x k) times b^T where b is (n x k). Rank-1 operands count as one row.
template <typename Scalar>
Tensor<Scalar> matmul_transposed(const Tensor<Scalar>& a,
                                 const Tensor<Scalar>& b) {
  detail::require_rank_at_most_2(a.shape(), "matmul_transposed");
  detail::require_rank_at_most_2(b.shape(), "matmul_transposed");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: incompatible shapes " +
                         to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  return Tensor<Scalar>::make_result(
      Shape{a.rows(), b.rows()}, a.value() * b.value().transpose(),
      {a.node(), b.node()}, [](detail::Node<Scalar>& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad * bv);
        if (n.parents[1]->requires_grad)
          n.parents[1]->accumulate(n.grad.transpose() * av);
      });
}

/// Affine map out[i,j] = sum_k x[i,k] W[j,k] + b[j]. A rank-1 x is a single
/// row and produces a rank-1 output.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  if (x.rank() > 2 || weight.rank() != 2 || bias.rank() != 1 ||
      x.cols() != weight.cols() || bias.cols() != weight.rows()) {
    throw DimensionError("linear: incompatible shapes x=" + to_string(x.shape()) +
                         " W=" + to_string(weight.shape()) +
                         " b=" + to_string(bias.shape()));
  }
  Matrix<Scalar> out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  Shape shape = x.rank() == 2 ? Shape{x.rows(), weight.rows()}
                              : Shape{weight.rows()};
  return Tensor<Scalar>::make_result(
      std::move(shape), std::move(out), {x.node(), weight.node(), bias.node()},
      [](detail::Node<Scalar>& n) {
        auto& xn = *n.parents[0];
        auto& wn = *n.parents[1];
        auto& bn = *n.parents[2];
        if (xn.requires_grad) xn.accumulate(n.grad * wn.value);
        if (wn.requires_grad) wn.accumulate(n.grad.transpose() * xn.value);
        if (bn.requires_grad) bn.accumulate(n.grad.colwise().sum());
      });
}

/// Scales each row to unit Euclidean norm. Rows with norm <= eps raise
/// DegenerateFeatureError.
template <typename Scalar>
Tensor<Scalar> normalize_rows(const Tensor<Scalar>& x, Scalar eps) {
  detail::require_rank_at_most_2(x.shape(), "normalize_rows");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = x.value().rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > eps)) {
      throw DegenerateFeatureError("row " + std::to_string(r) +
                                   " has near-zero norm");
    }
  }
  Matrix<Scalar> y = x.value().array().colwise() / norms.array();
  return Tensor<Scalar>::make_result(
      x.shape(), y, {x.node()}, [y, norms](detail::Node<Scalar>& n) {
        // dx = (dy - y <y, dy>) / |x|
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> proj =
            y.cwiseProduct(n.grad).rowwise().sum();
        Matrix<Scalar> dx = n.grad - (y.array().colwise() * proj.array()).matrix();
        dx.array().colwise() /= norms.array();
        n.parents[0]->accumulate(dx);
      });
}

/// Pairwise cosine similarities between the rows of a and the rows of b.
template <typename Scalar>
Tensor<Scalar> cosine_matrix(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                             Scalar eps) {
  return clamp_unit(
      matmul_transposed(normalize_rows(a, eps), normalize_rows(b, eps)));
}

/// Cosine similarity of two rank-1 tensors, as a scalar tensor.
template <typename Scalar>
Tensor<Scalar> cosine(const Tensor<Scalar>& f, const Tensor<Scalar>& g,
                      Scalar eps) {
  if (f.rank() != 1 || g.rank() != 1 || f.size() != g.size()) {
    throw DimensionError("cosine: incompatible shapes " + to_string(f.shape()) +
                         " and " + to_string(g.shape()));
  }
  return reshape(cosine_matrix(f, g, eps), Shape{});
}

}  // namespace fghv::ad
