#include "schyena/fft_conv.hpp"

namespace schyena {

namespace {

using Complex = std::complex<double>;
using Spectra = Eigen::MatrixXcd;  // column-major: one contiguous spectrum per channel

std::span<Complex> column_span(Spectra& s, Index c) { return {s.col(c).data(), static_cast<std::size_t>(s.rows())}; }

// Spectra of two real signals from one complex transform of a + i·b.
void split_pair(const std::vector<Complex>& z, std::span<Complex> out_a, std::span<Complex> out_b) {
  const std::size_t n = z.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Complex zk = z[k];
    const Complex zr = std::conj(z[(n - k) % n]);
    out_a[k] = 0.5 * (zk + zr);
    const Complex d = zk - zr;
    out_b[k] = Complex(0.5 * d.imag(), -0.5 * d.real());
  }
}

// Column-wise spectra of the real columns of src, each zero-padded to n and
// shifted down by `offset` rows.
Spectra real_column_spectra(const Matrix& src, std::size_t n, Index offset = 0) {
  const Index channels = src.cols();
  Spectra out(static_cast<Index>(n), channels);
  std::vector<Complex> z(n);
  for (Index c = 0; c < channels; c += 2) {
    const bool paired = c + 1 < channels;
    std::fill(z.begin(), z.end(), Complex(0));
    for (Index r = 0; r < src.rows(); ++r) z[r + offset] = Complex(src(r, c), paired ? src(r, c + 1) : 0.0);
    fft<double>(z);
    if (paired) {
      split_pair(z, column_span(out, c), column_span(out, c + 1));
    } else {
      std::copy(z.begin(), z.end(), out.col(c).data());
    }
  }
  return out;
}

// Inverse transform of per-channel products lhs[c]·f(rhs[c]), writing rows
// [offset, offset+rows) of the real result into dst (accumulating).
template <typename Combine>
void inverse_products(const Spectra& lhs, const Spectra& rhs, Combine combine, Index offset, Matrix& dst) {
  const std::size_t n = static_cast<std::size_t>(lhs.rows());
  const Index channels = lhs.cols();
  std::vector<Complex> z(n);
  for (Index c = 0; c < channels; c += 2) {
    const bool paired = c + 1 < channels;
    for (std::size_t k = 0; k < n; ++k) {
      Complex v = combine(lhs(k, c), rhs(k, c));
      if (paired) {
        const Complex w = combine(lhs(k, c + 1), rhs(k, c + 1));
        v += Complex(-w.imag(), w.real());
      }
      z[k] = v;
    }
    ifft<double>(z);
    for (Index r = 0; r < dst.rows(); ++r) {
      dst(r, c) += z[r + offset].real();
      if (paired) dst(r, c + 1) += z[r + offset].imag();
    }
  }
}

// Direct sums over the defined lags. Cheaper than three transforms for short
// sequences, and free of transform round-off.
Tensor direct_long_conv(const Tensor& u, const Tensor& taps, Index offset) {
  const Index length = u.rows();
  const Index channels = u.cols();
  const Index n_taps = taps.rows();
  const Matrix& uv = u.value();
  const Matrix& hv = taps.value();
  Matrix out = Matrix::Zero(length, channels);
  // y_t = sum_tau h[t - tau + offset] u_tau, for tap indices inside [0, n_taps).
  for (Index t = 0; t < length; ++t)
    for (Index tau = std::max<Index>(0, t + offset - n_taps + 1); tau <= std::min(length - 1, t + offset); ++tau)
      out.row(t) += hv.row(t - tau + offset).cwiseProduct(uv.row(tau));
  return Tensor::record(std::move(out), u.shape(), {u, taps},
                        [uv, hv, length, n_taps, offset](const Matrix& dy, std::span<Matrix* const> g) {
                          for (Index t = 0; t < length; ++t)
                            for (Index tau = std::max<Index>(0, t + offset - n_taps + 1);
                                 tau <= std::min(length - 1, t + offset); ++tau) {
                              const Index k = t - tau + offset;
                              if (g[0]) g[0]->row(tau) += dy.row(t).cwiseProduct(hv.row(k));
                              if (g[1]) g[1]->row(k) += dy.row(t).cwiseProduct(uv.row(tau));
                            }
                        });
}

}  // namespace

Tensor long_conv(const Tensor& u, const Tensor& taps, ConvMode mode) {
  const Index length = u.rows();
  const Index channels = u.cols();
  if (length < 1) throw DimensionError("long_conv: empty signal");
  if (taps.cols() != channels || taps.rows() != filter_length(length, mode))
    throw DimensionError("long_conv: taps " + std::to_string(taps.rows()) + "×" + std::to_string(taps.cols()) +
                         " do not fit a signal of " + std::to_string(length) + "×" + std::to_string(channels));
  const Index offset = -min_lag(length, mode);
  if (length <= kDirectConvMaxLength) return direct_long_conv(u, taps, offset);
  const std::size_t n = conv_fft_size(length, mode);

  Spectra signal = real_column_spectra(u.value(), n);
  Spectra filter = real_column_spectra(taps.value(), n);
  Matrix out = Matrix::Zero(length, channels);
  inverse_products(signal, filter, [](Complex a, Complex b) { return detail::cmul(a, b); }, offset, out);

  return Tensor::record(
      std::move(out), u.shape(), {u, taps},
      [signal = std::move(signal), filter = std::move(filter), n, offset](const Matrix& dy,
                                                                          std::span<Matrix* const> g) {
        // Output gradient placed where the forward read its outputs.
        const Spectra grad_spec = real_column_spectra(dy, n, offset);
        auto correlate = [](Complex a, Complex b) { return detail::cmul(a, std::conj(b)); };
        if (g[0]) inverse_products(grad_spec, filter, correlate, 0, *g[0]);
        if (g[1]) inverse_products(grad_spec, signal, correlate, 0, *g[1]);
      });
}

}  // namespace schyena
