#pragma once

// Wall-clock timing of the two convolution paths.

#include <vector>

#include "schyena/fft_conv.hpp"

namespace schyena {

struct ConvTiming {
  Index length = 0;
  ConvMode mode = ConvMode::bidirectional;
  double fft_seconds = 0.0;       // best of `repeats`
  double toeplitz_seconds = 0.0;  // best of `repeats`
  double max_abs_difference = 0.0;
};

std::vector<ConvTiming> benchmark_conv(const std::vector<Index>& lengths, ConvMode mode, int repeats,
                                       std::uint64_t seed);

}  // namespace schyena
