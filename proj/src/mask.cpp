#include "schyena/mask.hpp"

#include <algorithm>
#include <string>

namespace schyena {

MaskPlan make_mem_mask(const Vector& cell, double p, std::mt19937_64& rng) {
  if (!(p >= kMemMaskMin && p <= kMemMaskMax))
    throw ContractError("MEM masking probability " + std::to_string(p) + " outside [0.05, 0.4]");
  MaskPlan plan;
  plan.p_nonzero = p;
  std::bernoulli_distribution coin(p);
  for (Index i = 0; i < cell.size(); ++i) {
    if (cell(i) != 0.0 && coin(rng)) {
      plan.positions.push_back(i);
      plan.origins.push_back(MaskOrigin::was_nonzero);
    }
  }
  return plan;
}

MaskPlan make_imputation_mask(const Vector& cell, std::mt19937_64& rng, double p_nonzero, double p_zero) {
  if (!(p_nonzero >= 0.0 && p_nonzero <= 1.0 && p_zero >= 0.0 && p_zero <= 1.0))
    throw ContractError("masking probabilities must lie in [0, 1]");
  MaskPlan plan;
  plan.p_nonzero = p_nonzero;
  plan.p_zero = p_zero;
  std::bernoulli_distribution nonzero_coin(p_nonzero);
  std::bernoulli_distribution zero_coin(p_zero);
  for (Index i = 0; i < cell.size(); ++i) {
    const bool is_zero = cell(i) == 0.0;
    if (is_zero ? zero_coin(rng) : nonzero_coin(rng)) {
      plan.positions.push_back(i);
      plan.origins.push_back(is_zero ? MaskOrigin::was_zero : MaskOrigin::was_nonzero);
    }
  }
  return plan;
}

MaskPlan mask_from_positions(const Vector& cell, std::vector<Index> positions) {
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  MaskPlan plan;
  for (Index i : positions) {
    if (i < 0 || i >= cell.size()) throw IndexError("mask position outside the cell", i);
    plan.origins.push_back(cell(i) == 0.0 ? MaskOrigin::was_zero : MaskOrigin::was_nonzero);
  }
  plan.positions = std::move(positions);
  return plan;
}

}  // namespace schyena
