#include "schyena/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace schyena {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<Index> shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  Matrix& grad_buffer() {
    if (grad.size() == 0 && value.size() != 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

std::string shape_string(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<Index> matrix_shape(const Matrix& m) { return {m.rows(), m.cols()}; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

}  // namespace

bool grad_mode_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->shape = matrix_shape(value);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<Index> shape, std::span<const double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape.size() > 2) throw DimensionError("tensor rank above 2 is not supported: " + shape_string(shape));
  Index count = 1;
  for (Index extent : shape) count *= extent;
  if (count != static_cast<Index>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
  const Index rows = shape.size() == 2 ? shape[0] : 1;
  const Index cols = shape.empty() ? 1 : shape.back();
  node_->value = Eigen::Map<const Matrix>(data.data(), rows, cols);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t(Matrix::Constant(1, 1, value), requires_grad);
  t.node_->shape.clear();
  return t;
}

Tensor Tensor::row(const Vector& values, bool requires_grad) {
  Tensor t(Matrix(values.transpose()), requires_grad);
  t.node_->shape = {values.size()};
  return t;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

const std::vector<Index>& Tensor::shape() const { return node_->shape; }
Index Tensor::rows() const { return node_->value.rows(); }
Index Tensor::cols() const { return node_->value.cols(); }
Index Tensor::size() const { return node_->value.size(); }
const Matrix& Tensor::value() const { return node_->value; }
Matrix& Tensor::mutable_value() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !node_->backward; }
bool Tensor::has_grad() const { return node_->grad.size() != 0; }

const Matrix& Tensor::grad() const {
  if (!has_grad()) node_->grad = Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

Tensor Tensor::detached(bool requires_grad) const {
  Tensor t(node_->value, requires_grad);
  t.node_->shape = node_->shape;
  return t;
}

Tensor Tensor::record(Matrix value, std::vector<Index> shape, std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(value));
  out.node_->shape = std::move(shape);
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->inputs.reserve(inputs.size());
  for (Tensor& in : inputs) out.node_->inputs.push_back(std::move(in.node_));
  return out;
}

void Tensor::backward() const {
  if (size() != 1 || shape().size() > 1)
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(shape()));
  if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()(0, 0) += 1.0;
  std::vector<Matrix*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward) continue;
    if (node->grad.size() == 0) continue;
    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i)
      if (node->inputs[i]->requires_grad) slots[i] = &node->inputs[i]->grad_buffer();
    node->backward(node->grad, slots);
    // Intermediate gradients are not needed once propagated.
    if (node != node_.get()) node->grad.resize(0, 0);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  Matrix out = a.value() * b.value();
  auto shape = matrix_shape(out);
  return Tensor::record(std::move(out), std::move(shape), {a, b},
                        [av = a.value(), bv = b.value()](const Matrix& dy, std::span<Matrix* const> g) {
                          if (g[0]) g[0]->noalias() += dy * bv.transpose();
                          if (g[1]) g[1]->noalias() += av.transpose() * dy;
                        });
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
  require_same_shape(a, b, "elementwise");
  switch (kind) {
    case ElementwiseKind::add:
      return Tensor::record(a.value() + b.value(), a.shape(), {a, b},
                            [](const Matrix& dy, std::span<Matrix* const> g) {
                              if (g[0]) *g[0] += dy;
                              if (g[1]) *g[1] += dy;
                            });
    case ElementwiseKind::sub:
      return Tensor::record(a.value() - b.value(), a.shape(), {a, b},
                            [](const Matrix& dy, std::span<Matrix* const> g) {
                              if (g[0]) *g[0] += dy;
                              if (g[1]) *g[1] -= dy;
                            });
    case ElementwiseKind::mul:
      break;
  }
  return Tensor::record(a.value().cwiseProduct(b.value()), a.shape(), {a, b},
                        [av = a.value(), bv = b.value()](const Matrix& dy, std::span<Matrix* const> g) {
                          if (g[0]) *g[0] += dy.cwiseProduct(bv);
                          if (g[1]) *g[1] += dy.cwiseProduct(av);
                        });
}

Tensor scale(const Tensor& x, double factor) {
  return Tensor::record(x.value() * factor, x.shape(), {x},
                        [factor](const Matrix& dy, std::span<Matrix* const> g) { *g[0] += dy * factor; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(x.shape()));
  Matrix out = x.value().rowwise() + row.value().row(0);
  return Tensor::record(std::move(out), x.shape(), {x, row}, [](const Matrix& dy, std::span<Matrix* const> g) {
    if (g[0]) *g[0] += dy;
    if (g[1]) *g[1] += dy.colwise().sum();
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  const Index width = x.cols();
  if (width < 1) throw DimensionError("layer_norm: zero-width input");
  if (gain.size() != width || bias.size() != width || gain.rows() != 1 || bias.rows() != 1)
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " do not match input " + shape_string(x.shape()));
  const Matrix& xv = x.value();
  Matrix normalized(xv.rows(), width);
  Vector inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + epsilon);
    normalized.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (normalized.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return Tensor::record(
      std::move(out), x.shape(), {x, gain, bias},
      [normalized, inv_std, gv = gain.value()](const Matrix& dy, std::span<Matrix* const> g) {
        if (g[0]) {
          const Matrix dnorm = dy.array().rowwise() * gv.row(0).array();
          for (Index r = 0; r < dy.rows(); ++r) {
            const double mean_d = dnorm.row(r).mean();
            const double mean_dx = dnorm.row(r).dot(normalized.row(r)) / static_cast<double>(dy.cols());
            g[0]->row(r).array() +=
                inv_std(r) * (dnorm.row(r).array() - mean_d - normalized.row(r).array() * mean_dx);
          }
        }
        if (g[1]) *g[1] += dy.cwiseProduct(normalized).colwise().sum();
        if (g[2]) *g[2] += dy.colwise().sum();
      });
}

Tensor gelu(const Tensor& x) {
  const Matrix& xv = x.value();
  Matrix out = xv.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return Tensor::record(std::move(out), x.shape(), {x}, [xv](const Matrix& dy, std::span<Matrix* const> g) {
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    const Matrix d = xv.unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    *g[0] += dy.cwiseProduct(d);
  });
}

Tensor sin(const Tensor& x) {
  const Matrix& xv = x.value();
  return Tensor::record(xv.array().sin().matrix(), x.shape(), {x},
                        [xv](const Matrix& dy, std::span<Matrix* const> g) {
                          *g[0] += dy.cwiseProduct(xv.array().cos().matrix());
                        });
}

Tensor gather_rows(const Tensor& table, std::span<const Index> indices) {
  const Index count = static_cast<Index>(indices.size());
  Matrix out(count, table.cols());
  for (Index i = 0; i < count; ++i) {
    const Index src = indices[i];
    if (src < 0 || src >= table.rows())
      throw IndexError("gather_rows: index outside table of " + std::to_string(table.rows()) + " rows", src);
    out.row(i) = table.value().row(src);
  }
  std::vector<Index> idx(indices.begin(), indices.end());
  return Tensor::record(std::move(out), {count, table.cols()}, {table},
                        [idx = std::move(idx)](const Matrix& dy, std::span<Matrix* const> g) {
                          for (std::size_t i = 0; i < idx.size(); ++i) g[0]->row(idx[i]) += dy.row(i);
                        });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const Index width = parts.front().cols();
  Index total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != width)
      throw DimensionError("concat_rows: width mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    total += p.rows();
  }
  Matrix out(total, width);
  std::vector<Index> offsets;
  Index at = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor::record(std::move(out), {total, width}, std::vector<Tensor>(parts.begin(), parts.end()),
                        [offsets](const Matrix& dy, std::span<Matrix* const> g) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (g[i]) *g[i] += dy.middleRows(offsets[i], g[i]->rows());
                        });
}

Tensor slice_cols(const Tensor& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_string(x.shape()));
  return Tensor::record(x.value().middleCols(start, count), {x.rows(), count}, {x},
                        [start, count](const Matrix& dy, std::span<Matrix* const> g) {
                          g[0]->middleCols(start, count) += dy;
                        });
}

Tensor slice_rows(const Tensor& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows())
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_string(x.shape()));
  return Tensor::record(x.value().middleRows(start, count), {count, x.cols()}, {x},
                        [start, count](const Matrix& dy, std::span<Matrix* const> g) {
                          g[0]->middleRows(start, count) += dy;
                        });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rows() == 0) throw DimensionError("mean_rows: no rows");
  const double inv = 1.0 / static_cast<double>(x.rows());
  return Tensor::record(x.value().colwise().mean(), {1, x.cols()}, {x},
                        [inv](const Matrix& dy, std::span<Matrix* const> g) {
                          g[0]->rowwise() += dy.row(0) * inv;
                        });
}

Tensor sum(const Tensor& x) {
  return Tensor::record(Matrix::Constant(1, 1, x.value().sum()), {}, {x},
                        [](const Matrix& dy, std::span<Matrix* const> g) { g[0]->array() += dy(0, 0); });
}

Matrix finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Tensor handle = x;
  Matrix& value = handle.mutable_value();
  Matrix out(value.rows(), value.cols());
  NoGradGuard no_grad;
  for (Index i = 0; i < value.size(); ++i) {
    double& slot = value.data()[i];
    const double saved = slot;
    slot = saved + step;
    const double plus = f(handle);
    slot = saved - step;
    const double minus = f(handle);
    slot = saved;
    out.data()[i] = (plus - minus) / (2.0 * step);
  }
  return out;
}

double max_relative_error(const Matrix& a, const Matrix& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    const double y = b.data()[i];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("relative_error: shape mismatch");
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

}  // namespace schyena
