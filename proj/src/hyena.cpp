#include "schyena/hyena.hpp"

#include <cmath>
#include <numbers>

namespace schyena {

namespace {

Matrix uniform_matrix(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Linear Linear::init(Index in, Index out, std::mt19937_64& rng, double weight_scale) {
  const double bound = weight_scale / std::sqrt(static_cast<double>(in));
  return {Tensor(uniform_matrix(in, out, bound, rng), true), Tensor::zeros(1, out, true)};
}

Linear Linear::identity(Index width) {
  return {Tensor(Matrix::Identity(width, width), true), Tensor::zeros(1, width, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

LayerNormParams LayerNormParams::init(Index width) {
  return {Tensor(Matrix::Ones(1, width), true), Tensor::zeros(1, width, true)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

ImplicitFilter ImplicitFilter::init(Index channels, Index hidden_width, int frequencies, Index length_hint,
                                    std::mt19937_64& rng) {
  ImplicitFilter f;
  f.frequencies = frequencies;
  f.hidden = Linear::init(2 * frequencies + 1, hidden_width, rng, 2.0);
  f.output = Linear::init(hidden_width, channels, rng, std::sqrt(6.0 / static_cast<double>(std::max<Index>(1, length_hint))));
  Matrix rates(1, channels);
  // Log-spaced decay rates: a mix of long-range and local channels.
  const double lo = std::log(0.3), hi = std::log(10.0);
  for (Index c = 0; c < channels; ++c)
    rates(0, c) = channels == 1 ? lo : lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(channels - 1);
  f.log_rate = Tensor(std::move(rates), true);
  return f;
}

Matrix lag_features(Index length, ConvMode mode, int frequencies) {
  const Index taps = filter_length(length, mode);
  const Index first = min_lag(length, mode);
  Matrix features(taps, 2 * frequencies + 1);
  for (Index k = 0; k < taps; ++k) {
    const double z = static_cast<double>(first + k) / static_cast<double>(length);
    features(k, 0) = z;
    for (int f = 1; f <= frequencies; ++f) {
      features(k, 2 * f - 1) = std::sin(std::numbers::pi * f * z);
      features(k, 2 * f) = std::cos(std::numbers::pi * f * z);
    }
  }
  return features;
}

Tensor decay_window(const Tensor& log_rate, Index length, ConvMode mode) {
  const Index taps = filter_length(length, mode);
  const Index first = min_lag(length, mode);
  const Index channels = log_rate.cols();
  Vector distance(taps);
  for (Index k = 0; k < taps; ++k)
    distance(k) = std::abs(static_cast<double>(first + k)) / static_cast<double>(length);
  const Eigen::RowVectorXd rate = log_rate.value().row(0).array().exp();
  Matrix window(taps, channels);
  for (Index k = 0; k < taps; ++k) window.row(k) = (-distance(k) * rate.array()).exp();
  return Tensor::record(window, {taps, channels}, {log_rate},
                        [window, distance, rate](const Matrix& dy, std::span<Matrix* const> g) {
                          // d/dlog_rate exp(-e^s·d) = -e^s·d·exp(-e^s·d)
                          for (Index k = 0; k < window.rows(); ++k)
                            g[0]->row(0).array() -=
                                dy.row(k).array() * window.row(k).array() * rate.array() * distance(k);
                        });
}

Tensor materialize_filter(const ImplicitFilter& filter, Index length, ConvMode mode) {
  if (length < 1) throw DimensionError("materialize_filter: L must be positive");
  const Tensor features(lag_features(length, mode, filter.frequencies));
  const Tensor response = filter.output(sin(filter.hidden(features)));
  return mul(response, decay_window(filter.log_rate, length, mode));
}

std::vector<Filter<double>> to_filters(const Matrix& taps, Index length, ConvMode mode) {
  std::vector<Filter<double>> out;
  out.reserve(static_cast<std::size_t>(taps.cols()));
  for (Index c = 0; c < taps.cols(); ++c) out.emplace_back(Vector(taps.col(c)), mode, length);
  return out;
}

HyenaParams HyenaParams::init(Index width, int order, Index hidden_width, int frequencies, Index length_hint,
                              std::mt19937_64& rng) {
  HyenaParams p;
  p.order = order;
  const Index streams = (order + 1) * width;
  // Unit-variance streams.
  p.in_proj = Linear::init(width, streams, rng, std::sqrt(3.0));
  Matrix kernel = uniform_matrix(3, streams, 0.1, rng);
  kernel.row(1).array() += 1.0;
  p.short_kernel = Tensor(std::move(kernel), true);
  for (int n = 0; n < order; ++n)
    p.filters.push_back(ImplicitFilter::init(width, hidden_width, frequencies, length_hint, rng));
  p.out_proj = Linear::init(width, width, rng);
  return p;
}

HyenaBlock HyenaBlock::init(Index width, int order, Index hidden_width, int frequencies, Index length_hint,
                            std::mt19937_64& rng) {
  HyenaBlock b;
  b.norm1 = LayerNormParams::init(width);
  b.hyena = HyenaParams::init(width, order, hidden_width, frequencies, length_hint, rng);
  b.norm2 = LayerNormParams::init(width);
  b.ffn_in = Linear::init(width, 4 * width, rng);
  b.ffn_out = Linear::init(4 * width, width, rng);
  return b;
}

Tensor depthwise_conv3(const Tensor& x, const Tensor& kernel) {
  if (kernel.rows() != 3 || kernel.cols() != x.cols())
    throw DimensionError("depthwise_conv3: kernel " + std::to_string(kernel.rows()) + "×" +
                         std::to_string(kernel.cols()) + " does not match input width " + std::to_string(x.cols()));
  const Matrix& xv = x.value();
  const Matrix& kv = kernel.value();
  const Index length = xv.rows();
  Matrix out = xv.array().rowwise() * kv.row(1).array();
  if (length > 1) {
    out.bottomRows(length - 1).array() += xv.topRows(length - 1).array().rowwise() * kv.row(0).array();
    out.topRows(length - 1).array() += xv.bottomRows(length - 1).array().rowwise() * kv.row(2).array();
  }
  return Tensor::record(std::move(out), x.shape(), {x, kernel},
                        [xv, kv, length](const Matrix& dy, std::span<Matrix* const> g) {
                          if (g[0]) {
                            g[0]->array() += dy.array().rowwise() * kv.row(1).array();
                            if (length > 1) {
                              g[0]->topRows(length - 1).array() +=
                                  dy.bottomRows(length - 1).array().rowwise() * kv.row(0).array();
                              g[0]->bottomRows(length - 1).array() +=
                                  dy.topRows(length - 1).array().rowwise() * kv.row(2).array();
                            }
                          }
                          if (g[1]) {
                            g[1]->row(1) += dy.cwiseProduct(xv).colwise().sum();
                            if (length > 1) {
                              g[1]->row(0) +=
                                  dy.bottomRows(length - 1).cwiseProduct(xv.topRows(length - 1)).colwise().sum();
                              g[1]->row(2) +=
                                  dy.topRows(length - 1).cwiseProduct(xv.bottomRows(length - 1)).colwise().sum();
                            }
                          }
                        });
}

std::vector<Tensor> project_input(const Tensor& u, const HyenaParams& params) {
  const Index width = params.width();
  if (u.cols() != width)
    throw DimensionError("project_input: input width " + std::to_string(u.cols()) + " but model width " +
                         std::to_string(width));
  const Tensor projected = depthwise_conv3(params.in_proj(u), params.short_kernel);
  std::vector<Tensor> streams;
  streams.reserve(static_cast<std::size_t>(params.order + 1));
  for (int s = 0; s <= params.order; ++s) streams.push_back(slice_cols(projected, s * width, width));
  return streams;
}

Tensor hyena_forward(const Tensor& u, const HyenaParams& params, ConvMode mode) {
  const std::vector<Tensor> streams = project_input(u, params);
  Tensor z = streams[0];
  for (int n = 1; n <= params.order; ++n) {
    const Tensor taps = materialize_filter(params.filters[n - 1], u.rows(), mode);
    z = mul(streams[n], long_conv(z, taps, mode));
  }
  return params.out_proj(z);
}

Tensor block_forward(const Tensor& u, const HyenaBlock& block, ConvMode mode) {
  const Tensor mixed = add(u, hyena_forward(block.norm1(u), block.hyena, mode));
  return add(mixed, block.ffn_out(gelu(block.ffn_in(block.norm2(mixed)))));
}

void visit_parameters(Linear& layer, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".weight", layer.weight, true);
  visit(prefix + ".bias", layer.bias, true);
}

void visit_parameters(LayerNormParams& norm, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".gain", norm.gain, false);
  visit(prefix + ".bias", norm.bias, false);
}

void visit_parameters(ImplicitFilter& filter, const std::string& prefix, const ParamVisitor& visit) {
  visit_parameters(filter.hidden, prefix + ".hidden", visit);
  visit_parameters(filter.output, prefix + ".output", visit);
  visit(prefix + ".log_rate", filter.log_rate, false);
}

void visit_parameters(HyenaParams& params, const std::string& prefix, const ParamVisitor& visit) {
  visit_parameters(params.in_proj, prefix + ".in_proj", visit);
  visit(prefix + ".short_kernel", params.short_kernel, true);
  for (std::size_t n = 0; n < params.filters.size(); ++n)
    visit_parameters(params.filters[n], prefix + ".filters." + std::to_string(n), visit);
  visit_parameters(params.out_proj, prefix + ".out_proj", visit);
}

void visit_parameters(HyenaBlock& block, const std::string& prefix, const ParamVisitor& visit) {
  visit_parameters(block.norm1, prefix + ".norm1", visit);
  visit_parameters(block.hyena, prefix + ".hyena", visit);
  visit_parameters(block.norm2, prefix + ".norm2", visit);
  visit_parameters(block.ffn_in, prefix + ".ffn_in", visit);
  visit_parameters(block.ffn_out, prefix + ".ffn_out", visit);
}

}  // namespace schyena
