#include "schyena/bench.hpp"

#include <chrono>
#include <limits>
#include <random>

namespace schyena {

namespace {

template <typename F>
double best_time(int repeats, F&& run) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    run();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

}  // namespace

std::vector<ConvTiming> benchmark_conv(const std::vector<Index>& lengths, ConvMode mode, int repeats,
                                       std::uint64_t seed) {
  if (repeats < 1) throw ContractError("benchmark_conv: repeats must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<ConvTiming> out;
  for (Index length : lengths) {
    if (length < 1) throw ContractError("benchmark_conv: lengths must be positive");
    Vector u(length), taps(filter_length(length, mode));
    for (Index i = 0; i < u.size(); ++i) u(i) = dist(rng);
    for (Index i = 0; i < taps.size(); ++i) taps(i) = dist(rng);
    const Filter<double> h(taps, mode, length);
    Vector y_fft, y_ref;
    ConvTiming t;
    t.length = length;
    t.mode = mode;
    t.fft_seconds = best_time(repeats, [&] { y_fft = fft_conv(u, h); });
    t.toeplitz_seconds = best_time(repeats, [&] { y_ref = toeplitz_conv(u, h); });
    t.max_abs_difference = (y_fft - y_ref).cwiseAbs().maxCoeff();
    out.push_back(t);
  }
  return out;
}

}  // namespace schyena
