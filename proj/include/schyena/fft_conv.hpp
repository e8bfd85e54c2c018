#pragma once

// Exact linear long convolution: an O(L²) Toeplitz reference and an
// O(L log L) FFT path. Both index the output as
//
//   y_t = Σ_{τ=0}^{L-1} h_{t-τ} u_τ
//
// with h defined on lags [0, L-1] (causal) or [-L+1, L-1] (bidirectional)
// and zero elsewhere.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "schyena/errors.hpp"
#include "schyena/tensor.hpp"

namespace schyena {

enum class ConvMode { causal, bidirectional };

// Number of taps a filter needs for sequence length L.
constexpr Index filter_length(Index length, ConvMode mode) {
  return mode == ConvMode::causal ? length : 2 * length - 1;
}

// Smallest lag a filter of this mode defines.
constexpr Index min_lag(Index length, ConvMode mode) { return mode == ConvMode::causal ? 0 : -(length - 1); }

template <typename Scalar>
using SeqVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Filter taps stored by ascending lag, starting at min_lag(length, mode).
template <typename Scalar>
struct Filter {
  SeqVector<Scalar> taps;
  ConvMode mode = ConvMode::bidirectional;
  Index length = 0;

  Filter() = default;
  Filter(SeqVector<Scalar> t, ConvMode m, Index l) : taps(std::move(t)), mode(m), length(l) {
    if (length < 1) throw DimensionError("filter sequence length must be positive");
    if (taps.size() != filter_length(length, mode))
      throw DimensionError("filter has " + std::to_string(taps.size()) + " taps, expected " +
                           std::to_string(filter_length(length, mode)) + " for L=" + std::to_string(length));
  }

  Scalar at_lag(Index lag) const {
    const Index k = lag - min_lag(length, mode);
    return (k < 0 || k >= taps.size()) ? Scalar(0) : taps(k);
  }
};

namespace detail {

// Plain product; std::complex operator* adds NaN/Inf recovery that the
// compiler cannot vectorize.
template <typename Scalar>
inline std::complex<Scalar> cmul(std::complex<Scalar> a, std::complex<Scalar> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

template <typename Scalar>
struct FftPlan {
  std::vector<std::size_t> bit_reverse;
  std::vector<std::complex<Scalar>> roots;  // exp(-2πik/n), k < n/2

  explicit FftPlan(std::size_t n) : bit_reverse(n), roots(n / 2) {
    const int bits = n > 1 ? std::countr_zero(n) : 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      bit_reverse[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      roots[k] = std::complex<Scalar>(static_cast<Scalar>(std::cos(angle)), static_cast<Scalar>(std::sin(angle)));
    }
  }

  static const FftPlan& get(std::size_t n) {
    thread_local std::unordered_map<std::size_t, FftPlan> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, FftPlan(n)).first;
    return it->second;
  }
};

template <typename Scalar>
void require_length(Index u_length, const Filter<Scalar>& h) {
  if (u_length != h.length)
    throw DimensionError("signal length " + std::to_string(u_length) + " does not match filter target L=" +
                         std::to_string(h.length));
}

}  // namespace detail

// In-place radix-2 DFT. The inverse includes the 1/n factor.
template <typename Scalar>
void fft(std::span<std::complex<Scalar>> x, bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 0 || !std::has_single_bit(n))
    throw ContractError("fft length must be a power of two, got " + std::to_string(n));
  const auto& plan = detail::FftPlan<Scalar>::get(n);
  for (std::size_t i = 0; i < n; ++i)
    if (i < plan.bit_reverse[i]) std::swap(x[i], x[plan.bit_reverse[i]]);
  for (std::size_t half = 1; half < n; half <<= 1) {
    const std::size_t stride = n / (2 * half);
    for (std::size_t start = 0; start < n; start += 2 * half) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<Scalar> w = plan.roots[k * stride];
        if (inverse) w = std::conj(w);
        const std::complex<Scalar> a = x[start + k];
        const std::complex<Scalar> b = detail::cmul(x[start + k + half], w);
        x[start + k] = a + b;
        x[start + k + half] = a - b;
      }
    }
  }
  if (inverse) {
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    for (auto& v : x) v *= inv_n;
  }
}

template <typename Scalar>
void ifft(std::span<std::complex<Scalar>> x) {
  fft(x, true);
}

// FFT size used for linear (not circular) convolution of a length-L signal
// with a filter of the given mode.
inline std::size_t conv_fft_size(Index length, ConvMode mode) {
  return std::bit_ceil(static_cast<std::size_t>(length + filter_length(length, mode) - 1));
}

template <typename Derived>
SeqVector<typename Derived::Scalar> toeplitz_conv(const Eigen::MatrixBase<Derived>& u,
                                                  const Filter<typename Derived::Scalar>& h) {
  using Scalar = typename Derived::Scalar;
  detail::require_length(u.size(), h);
  const Index length = u.size();
  SeqVector<Scalar> y = SeqVector<Scalar>::Zero(length);
  for (Index t = 0; t < length; ++t) {
    Scalar acc(0);
    for (Index tau = 0; tau < length; ++tau) acc += h.at_lag(t - tau) * u(tau);
    y(t) = acc;
  }
  return y;
}

template <typename Derived>
SeqVector<typename Derived::Scalar> fft_conv(const Eigen::MatrixBase<Derived>& u,
                                             const Filter<typename Derived::Scalar>& h) {
  using Scalar = typename Derived::Scalar;
  using Complex = std::complex<Scalar>;
  detail::require_length(u.size(), h);
  const Index length = u.size();
  const std::size_t n = conv_fft_size(length, h.mode);
  std::vector<Complex> us(n, Complex(0)), hs(n, Complex(0));
  for (Index i = 0; i < length; ++i) us[i] = Complex(u(i), 0);
  for (Index k = 0; k < h.taps.size(); ++k) hs[k] = Complex(h.taps(k), 0);
  fft<Scalar>(us);
  fft<Scalar>(hs);
  for (std::size_t i = 0; i < n; ++i) us[i] = detail::cmul(us[i], hs[i]);
  ifft<Scalar>(us);
  // Tap index k holds lag k + min_lag, so y_t sits at t - min_lag.
  const Index offset = -min_lag(length, h.mode);
  SeqVector<Scalar> y(length);
  for (Index t = 0; t < length; ++t) y(t) = us[t + offset].real();
  return y;
}

// long_conv sums directly up to this length and uses the FFT above it.
inline constexpr Index kDirectConvMaxLength = 32;

// Differentiable per-channel long convolution. u is L×C, taps is
// filter_length(L, mode)×C with rows ordered by ascending lag. The result
// is L×C. Gradients flow to both the signal and the taps.
Tensor long_conv(const Tensor& u, const Tensor& taps, ConvMode mode);

}  // namespace schyena
