#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "schyena/gradcheck.hpp"
#include "schyena/hyena.hpp"

using namespace schyena;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Index count(HyenaParams& p) {
  Index n = 0;
  visit_parameters(p, "h", [&](const std::string&, Tensor& t, bool) { n += t.size(); });
  return n;
}

// The same recurrence evaluated channel by channel with the O(L²) oracle.
Matrix reference_hyena(const Tensor& u, const HyenaParams& params, ConvMode mode) {
  NoGradGuard guard;
  const auto streams = project_input(u, params);
  Matrix z = streams[0].value();
  for (int n = 1; n <= params.order; ++n) {
    const Matrix taps = materialize_filter(params.filters[n - 1], u.rows(), mode).value();
    const auto filters = to_filters(taps, u.rows(), mode);
    Matrix conv(z.rows(), z.cols());
    for (Index c = 0; c < z.cols(); ++c) conv.col(c) = toeplitz_conv(Vector(z.col(c)), filters[c]);
    z = streams[n].value().cwiseProduct(conv);
  }
  return (z * params.out_proj.weight.value()).rowwise() + params.out_proj.bias.value().row(0);
}

}  // namespace

TEST(ImplicitFilter, BidirectionalTapCount) {
  std::mt19937_64 rng(1);
  ImplicitFilter f = ImplicitFilter::init(3, 8, 4, 5, rng);
  EXPECT_EQ(materialize_filter(f, 5, ConvMode::bidirectional).rows(), 9);
  EXPECT_EQ(materialize_filter(f, 5, ConvMode::causal).rows(), 5);
  EXPECT_EQ(materialize_filter(f, 5, ConvMode::bidirectional).cols(), 3);
}

TEST(ImplicitFilter, RatesArePositiveAndTapsFinite) {
  std::mt19937_64 rng(2);
  ImplicitFilter f = ImplicitFilter::init(16, 32, 8, 256, rng);
  EXPECT_TRUE((f.log_rate.value().array().exp() > 0.0).all());
  EXPECT_TRUE(materialize_filter(f, 256, ConvMode::bidirectional).value().allFinite());
}

TEST(ImplicitFilter, LargeDecayLeavesOnlyLagZero) {
  std::mt19937_64 rng(3);
  ImplicitFilter f = ImplicitFilter::init(4, 8, 4, 12, rng);
  f.log_rate.mutable_value().setConstant(30.0);
  const Matrix taps = materialize_filter(f, 12, ConvMode::bidirectional).value();
  for (Index k = 0; k < taps.rows(); ++k) {
    if (k == 11) continue;
    EXPECT_LT(taps.row(k).cwiseAbs().maxCoeff(), 1e-12) << "lag " << k - 11;
  }
  EXPECT_GT(taps.row(11).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ImplicitFilter, WindowIsSymmetricInLag) {
  std::mt19937_64 rng(4);
  ImplicitFilter f = ImplicitFilter::init(3, 8, 4, 6, rng);
  const Matrix w = decay_window(f.log_rate, 6, ConvMode::bidirectional).value();
  for (Index k = 0; k < 5; ++k) EXPECT_EQ(w.row(k), w.row(10 - k));
  EXPECT_EQ(w.row(5), Matrix::Ones(1, 3));
}

TEST(ImplicitFilter, ParameterCountIndependentOfLength) {
  std::mt19937_64 rng_a(5), rng_b(5);
  HyenaParams a = HyenaParams::init(16, 3, 32, 8, 128, rng_a);
  HyenaParams b = HyenaParams::init(16, 3, 32, 8, 1024, rng_b);
  EXPECT_EQ(count(a), count(b));
  EXPECT_EQ(materialize_filter(a.filters[0], 1024, ConvMode::bidirectional).rows(), 2047);
}

TEST(ProjectInput, IdentityConfigurationCopiesInput) {
  const Index width = 3;
  std::mt19937_64 rng(6);
  HyenaParams p = HyenaParams::init(width, 3, 8, 4, 5, rng);
  Matrix w(width, 4 * width);
  for (int s = 0; s < 4; ++s) w.block(0, s * width, width, width).setIdentity();
  p.in_proj = {Tensor(w, true), Tensor::zeros(1, 4 * width, true)};
  Matrix kernel = Matrix::Zero(3, 4 * width);
  kernel.row(1).setOnes();
  p.short_kernel = Tensor(kernel, true);
  const Tensor u(random_matrix(5, width, rng));
  const auto streams = project_input(u, p);
  ASSERT_EQ(streams.size(), 4u);
  for (const auto& s : streams) EXPECT_EQ(s.value(), u.value());
}

TEST(ProjectInput, ShortConvIsSymmetricAndZeroPadded) {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  Matrix k(3, 1);
  k << 10, 100, 1000;
  const Matrix y = depthwise_conv3(Tensor(x), Tensor(k)).value();
  EXPECT_EQ(y(0, 0), 100 * 1 + 1000 * 2);
  EXPECT_EQ(y(1, 0), 10 * 1 + 100 * 2 + 1000 * 3);
  EXPECT_EQ(y(3, 0), 10 * 3 + 100 * 4);
}

TEST(ProjectInput, WidthMismatch) {
  std::mt19937_64 rng(7);
  HyenaParams p = HyenaParams::init(4, 2, 8, 4, 5, rng);
  EXPECT_THROW(project_input(Tensor::zeros(5, 3), p), DimensionError);
}

TEST(HyenaForward, UnitGatesAndImpulseFiltersReturnV) {
  const Index width = 2, length = 6;
  std::mt19937_64 rng(8);
  HyenaParams p = HyenaParams::init(width, 2, 8, 4, length, rng);
  Matrix w = Matrix::Zero(width, 3 * width);
  w.leftCols(width).setIdentity();
  Matrix b = Matrix::Zero(1, 3 * width);
  b.rightCols(2 * width).setOnes();
  p.in_proj = {Tensor(w, true), Tensor(b, true)};
  Matrix kernel = Matrix::Zero(3, 3 * width);
  kernel.row(1).setOnes();
  p.short_kernel = Tensor(kernel, true);
  for (auto& f : p.filters) {
    f.output.weight.mutable_value().setZero();
    f.output.bias.mutable_value().setOnes();
    f.log_rate.mutable_value().setConstant(40.0);
  }
  p.out_proj = Linear::identity(width);
  const Tensor u(random_matrix(length, width, rng));
  EXPECT_LT((hyena_forward(u, p).value() - u.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HyenaForward, OrderOneHandEvaluation) {
  // L=3, D=1: v = 2u, x = -u + 0.5, h_t = 0.8·exp(-1.5|t|/3), y = 3·x⊙(h*v) + 0.1.
  std::mt19937_64 rng(9);
  HyenaParams p = HyenaParams::init(1, 1, 4, 2, 3, rng);
  p.in_proj = {Tensor(Matrix{{2.0, -1.0}}, true), Tensor(Matrix{{0.0, 0.5}}, true)};
  p.short_kernel = Tensor(Matrix{{0, 0}, {1, 1}, {0, 0}}, true);
  p.filters[0].output.weight.mutable_value().setZero();
  p.filters[0].output.bias.mutable_value().setConstant(0.8);
  p.filters[0].log_rate.mutable_value().setConstant(std::log(1.5));
  p.out_proj = {Tensor(Matrix{{3.0}}, true), Tensor(Matrix{{0.1}}, true)};

  const double u[3] = {1.0, -2.0, 0.5};
  auto h = [](int t) { return 0.8 * std::exp(-1.5 * std::abs(t) / 3.0); };
  Matrix expected(3, 1);
  for (int t = 0; t < 3; ++t) {
    double conv = 0.0;
    for (int tau = 0; tau < 3; ++tau) conv += h(t - tau) * 2.0 * u[tau];
    expected(t, 0) = 3.0 * (-u[t] + 0.5) * conv + 0.1;
  }
  const Tensor y = hyena_forward(Tensor(Matrix{{u[0]}, {u[1]}, {u[2]}}), p);
  EXPECT_LT((y.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HyenaForward, MatchesToeplitzRecurrence) {
  std::mt19937_64 rng(10);
  for (Index length : {1, 5, 33, 64})
    for (ConvMode mode : {ConvMode::causal, ConvMode::bidirectional}) {
      HyenaParams p = HyenaParams::init(4, 3, 16, 4, length, rng);
      const Tensor u(random_matrix(length, 4, rng, 2.0));
      const double err = (hyena_forward(u, p, mode).value() - reference_hyena(u, p, mode)).cwiseAbs().maxCoeff();
      EXPECT_LT(err, 1e-8) << "L=" << length;
    }
}

TEST(HyenaForward, ReceptiveFieldDependsOnMode) {
  std::mt19937_64 rng(11);
  const Index length = 16, width = 4;
  HyenaParams p = HyenaParams::init(width, 3, 16, 4, length, rng);
  for (ConvMode mode : {ConvMode::causal, ConvMode::bidirectional}) {
    Tensor u(random_matrix(length, width, rng), true);
    sum(slice_rows(hyena_forward(u, p, mode), 0, 1)).backward();
    const double last = u.grad().row(length - 1).cwiseAbs().maxCoeff();
    if (mode == ConvMode::causal) EXPECT_EQ(last, 0.0);
    else EXPECT_GT(last, 1e-8);
  }
}

TEST(HyenaBlock, ZeroOutputProjectionsPassThrough) {
  std::mt19937_64 rng(12);
  HyenaBlock b = HyenaBlock::init(4, 3, 8, 4, 10, rng);
  b.hyena.out_proj.weight.mutable_value().setZero();
  b.ffn_out.weight.mutable_value().setZero();
  const Tensor u(random_matrix(10, 4, rng));
  EXPECT_EQ(block_forward(u, b).value(), u.value());
}

TEST(HyenaBlock, FourStackedBlocksPreserveShape) {
  std::mt19937_64 rng(13);
  Tensor h(random_matrix(20, 6, rng));
  for (int m = 0; m < 4; ++m) h = block_forward(h, HyenaBlock::init(6, 3, 8, 4, 20, rng));
  EXPECT_EQ(h.rows(), 20);
  EXPECT_EQ(h.cols(), 6);
  EXPECT_TRUE(h.value().allFinite());
}

TEST(HyenaGradients, FilterProjectionAndStackedBlocks) {
  const auto entries = gradcheck_hyena({});
  EXPECT_GT(entries.size(), 20u);
  for (const auto& e : entries) EXPECT_TRUE(e.passed) << e.name << " relative error " << e.error;
}
