#pragma once

// Dense tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a local backward rule; calling
// backward() on a scalar result walks the resulting DAG once in reverse
// topological order and accumulates gradients into every leaf that asked
// for one. Values are stored as row-major Eigen matrices; rank-1 tensors
// are 1×n rows and scalars are 1×1.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "schyena/errors.hpp"

namespace schyena {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = RowMatrix<double>;
using Vector = Eigen::VectorXd;

// Receives the gradient of the node's output and writes (+=) into the
// gradient buffers of its inputs. A null slot means that input does not
// require a gradient.
using BackwardFn = std::function<void(const Matrix& output_grad, std::span<Matrix* const> input_grads)>;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  Tensor(std::vector<Index> shape, std::span<const double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(const Vector& values, bool requires_grad = false);
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<Index>& shape() const;
  Index rows() const;
  Index cols() const;
  Index size() const;

  const Matrix& value() const;
  // Direct write access for optimizers and finite-difference probes.
  Matrix& mutable_value();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  const Matrix& grad() const;
  void zero_grad();

  // Fresh leaf holding a copy of this value; shares no graph state.
  Tensor detached(bool requires_grad = false) const;

  // Populates grads of every requires_grad leaf reachable from this scalar.
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Used by operation implementations.
  static Tensor record(Matrix value, std::vector<Index> shape, std::vector<Tensor> inputs, BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

enum class ElementwiseKind { add, sub, mul };

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::mul); }
Tensor scale(const Tensor& x, double factor);

// x (L×D) plus a 1×D row broadcast over every row.
Tensor add_row(const Tensor& x, const Tensor& row);

// Per-row normalization to zero mean and unit variance, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon = 1e-5);

Tensor gelu(const Tensor& x);
Tensor sin(const Tensor& x);

// Row i of the result is table[indices[i]]. Backward scatter-adds.
Tensor gather_rows(const Tensor& table, std::span<const Index> indices);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, Index start, Index count);
Tensor slice_rows(const Tensor& x, Index start, Index count);
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);

// Central differences (f(x+εe) − f(x−εe)) / 2ε per coordinate of x.
// x is perturbed in place and restored, so closures that captured the
// same handle observe the perturbation.
Matrix finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step = 1e-5);

// max |a−b| / max(|a|, |b|, floor) over all entries.
double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8);

// ‖a−b‖ / max(‖a‖, ‖b‖, floor) in the Frobenius norm.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12);

}  // namespace schyena
