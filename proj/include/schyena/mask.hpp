#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "schyena/tensor.hpp"

namespace schyena {

enum class MaskOrigin : std::uint8_t { was_zero, was_nonzero };

// Masked positions of one cell, ascending and unique, each tagged with
// whether the hidden value was zero.
struct MaskPlan {
  std::vector<Index> positions;
  std::vector<MaskOrigin> origins;
  double p_nonzero = 0.0;
  double p_zero = 0.0;

  bool empty() const { return positions.empty(); }
  std::size_t size() const { return positions.size(); }
};

inline constexpr double kMemMaskMin = 0.05;
inline constexpr double kMemMaskMax = 0.4;
inline constexpr double kImputeMaskNonzero = 0.4;
inline constexpr double kImputeMaskZero = 0.04;

// Masks each nonzero position independently with probability p. Zeros are
// never masked. Requires p in [0.05, 0.4].
MaskPlan make_mem_mask(const Vector& cell, double p, std::mt19937_64& rng);

// Nonzero positions masked with p_nonzero, zero positions with p_zero.
MaskPlan make_imputation_mask(const Vector& cell, std::mt19937_64& rng, double p_nonzero = kImputeMaskNonzero,
                              double p_zero = kImputeMaskZero);

// Mask over an explicit position list; origins read from the cell.
MaskPlan mask_from_positions(const Vector& cell, std::vector<Index> positions);

}  // namespace schyena
