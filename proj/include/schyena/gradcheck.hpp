#pragma once

// Finite-difference gradient suites shared by the tests and the CLI.

#include <cstdint>
#include <string>
#include <vector>

#include "schyena/tensor.hpp"

namespace schyena {

struct GradCheckEntry {
  std::string suite;
  std::string name;
  double error = 0.0;  // relative_error(analytic, numeric)
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

// Checks f's gradient with respect to each of `inputs` and appends one
// entry per input. f must build a fresh graph from the inputs on each call.
void check_gradients(const std::string& suite, const std::vector<std::pair<std::string, Tensor>>& inputs,
                     const std::function<Tensor()>& f, const GradCheckOptions& options,
                     std::vector<GradCheckEntry>& out);

// Elementary operations with inputs drawn from U[-2, 2].
std::vector<GradCheckEntry> gradcheck_tensor_ops(const GradCheckOptions& options);
// long_conv in both modes, signal and taps.
std::vector<GradCheckEntry> gradcheck_conv(const GradCheckOptions& options);
// Implicit filter, input projection, and two stacked blocks (L=8, D=4).
std::vector<GradCheckEntry> gradcheck_hyena(const GradCheckOptions& options);
// Every parameter of a 2-block model (L=8, D=4, N=2) under the masked
// regression loss plus the classification loss.
std::vector<GradCheckEntry> gradcheck_model(const GradCheckOptions& options);

std::vector<GradCheckEntry> gradcheck_all(const GradCheckOptions& options);

}  // namespace schyena
