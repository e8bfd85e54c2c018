#pragma once

// The Hyena operator and the residual block built around it.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "schyena/fft_conv.hpp"
#include "schyena/tensor.hpp"

namespace schyena {

// Affine map x·W + b with W stored in×out.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(Index in, Index out, std::mt19937_64& rng, double weight_scale = 1.0);
  static Linear identity(Index width);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(Index width);
  Tensor operator()(const Tensor& x) const;
};

// Generates filter taps as a function of lag: sinusoidal lag features pass
// through a two-layer sine-activated network, and each output channel is
// windowed by exp(-rate·|t|/L) with a learnable positive rate.
struct ImplicitFilter {
  Linear hidden;       // (2K+1) → F
  Linear output;       // F → D
  Tensor log_rate;     // 1×D, rate = exp(log_rate) > 0
  int frequencies = 8; // K

  static ImplicitFilter init(Index channels, Index hidden_width, int frequencies, Index length_hint,
                             std::mt19937_64& rng);
  Index channels() const { return output.weight.cols(); }
};

// Features of each lag in the mode's range, one row per lag in ascending
// order: [t/L, sin(πkt/L), cos(πkt/L) for k = 1..K].
Matrix lag_features(Index length, ConvMode mode, int frequencies);

// Multiplicative window exp(-exp(log_rate_d)·|t|/L), rows ordered by lag.
Tensor decay_window(const Tensor& log_rate, Index length, ConvMode mode);

// filter_length(L, mode)×D taps, one column per channel.
Tensor materialize_filter(const ImplicitFilter& filter, Index length, ConvMode mode);

// Converts a materialized tap tensor into per-channel Filter values.
std::vector<Filter<double>> to_filters(const Matrix& taps, Index length, ConvMode mode);

struct HyenaParams {
  int order = 3;                       // N
  Linear in_proj;                      // D → (N+1)·D
  Tensor short_kernel;                 // 3×(N+1)·D depthwise taps for lags -1, 0, +1
  std::vector<ImplicitFilter> filters; // N
  Linear out_proj;                     // D → D

  static HyenaParams init(Index width, int order, Index hidden_width, int frequencies, Index length_hint,
                          std::mt19937_64& rng);
  Index width() const { return out_proj.weight.cols(); }
};

struct HyenaBlock {
  LayerNormParams norm1;
  HyenaParams hyena;
  LayerNormParams norm2;
  Linear ffn_in;   // D → 4D
  Linear ffn_out;  // 4D → D

  static HyenaBlock init(Index width, int order, Index hidden_width, int frequencies, Index length_hint,
                         std::mt19937_64& rng);
};

// Depthwise width-3 convolution with symmetric zero padding:
// y_t = k_0·x_{t-1} + k_1·x_t + k_2·x_{t+1}, per column.
Tensor depthwise_conv3(const Tensor& x, const Tensor& kernel);

// (v, x¹, …, xᴺ), each L×D.
std::vector<Tensor> project_input(const Tensor& u, const HyenaParams& params);

Tensor hyena_forward(const Tensor& u, const HyenaParams& params, ConvMode mode = ConvMode::bidirectional);

Tensor block_forward(const Tensor& u, const HyenaBlock& block, ConvMode mode = ConvMode::bidirectional);

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor, bool decay)>;

void visit_parameters(Linear& layer, const std::string& prefix, const ParamVisitor& visit);
void visit_parameters(LayerNormParams& norm, const std::string& prefix, const ParamVisitor& visit);
void visit_parameters(ImplicitFilter& filter, const std::string& prefix, const ParamVisitor& visit);
void visit_parameters(HyenaParams& params, const std::string& prefix, const ParamVisitor& visit);
void visit_parameters(HyenaBlock& block, const std::string& prefix, const ParamVisitor& visit);

}  // namespace schyena
