#pragma once

#include <optional>
#include <span>
#include <vector>

#include "schyena/tensor.hpp"

namespace schyena {

struct ClassificationReport {
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted class
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<long> support;
  // Classes with no true and no predicted samples; their F1 is reported as 0.
  std::vector<bool> degenerate;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
};

ClassificationReport f1_report(std::span<const int> labels, std::span<const int> predictions, int n_classes);

struct MsePearson {
  double mse = 0.0;
  std::optional<double> pearson;  // empty when either side has zero variance
};

MsePearson mse_pearson(std::span<const double> truth, std::span<const double> imputed);

}  // namespace schyena
