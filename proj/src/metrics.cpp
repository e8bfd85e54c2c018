#include "schyena/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace schyena {

ClassificationReport f1_report(std::span<const int> labels, std::span<const int> predictions, int n_classes) {
  if (labels.size() != predictions.size())
    throw ContractError("f1_report: " + std::to_string(labels.size()) + " labels but " +
                        std::to_string(predictions.size()) + " predictions");
  if (n_classes < 1) throw ContractError("f1_report: need at least one class");
  ClassificationReport r;
  r.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw IndexError("f1_report: label out of range", labels[i]);
    if (predictions[i] < 0 || predictions[i] >= n_classes)
      throw IndexError("f1_report: prediction out of range", predictions[i]);
    ++r.confusion(labels[i], predictions[i]);
  }
  const auto n = static_cast<double>(labels.size());
  long correct = 0;
  long pooled_fp = 0, pooled_fn = 0;
  double weighted = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const long tp = r.confusion(c, c);
    const long support = r.confusion.row(c).sum();
    const long predicted = r.confusion.col(c).sum();
    const double precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    const double recall = support > 0 ? static_cast<double>(tp) / support : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.precision.push_back(precision);
    r.recall.push_back(recall);
    r.f1.push_back(f1);
    r.support.push_back(support);
    r.degenerate.push_back(support == 0 && predicted == 0);
    r.macro_f1 += f1;
    weighted += f1 * static_cast<double>(support);
    correct += tp;
    pooled_fp += predicted - tp;
    pooled_fn += support - tp;
  }
  r.macro_f1 /= n_classes;
  r.weighted_f1 = n > 0 ? weighted / n : 0.0;
  r.accuracy = n > 0 ? static_cast<double>(correct) / n : 0.0;
  const double pooled_tp = static_cast<double>(correct);
  r.micro_f1 = pooled_tp > 0 ? 2.0 * pooled_tp / (2.0 * pooled_tp + static_cast<double>(pooled_fp + pooled_fn)) : 0.0;
  return r;
}

MsePearson mse_pearson(std::span<const double> truth, std::span<const double> imputed) {
  if (truth.size() != imputed.size()) throw ContractError("mse_pearson: length mismatch");
  if (truth.empty()) throw ContractError("mse_pearson: empty input");
  const Eigen::Map<const Vector> x(truth.data(), static_cast<Index>(truth.size()));
  const Eigen::Map<const Vector> y(imputed.data(), static_cast<Index>(imputed.size()));
  MsePearson out;
  out.mse = (x - y).squaredNorm() / static_cast<double>(x.size());
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (sxx > 0.0 && syy > 0.0) out.pearson = std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
  return out;
}

}  // namespace schyena
