#pragma once

// Independent reference computations used by several test binaries.

#include <cmath>
#include <vector>

#include "schyena/data.hpp"

namespace schyena::oracle {

// Nearest class centroid (Euclidean) fitted on `train`, accuracy on `test`.
inline double centroid_accuracy(const ExpressionMatrix& train, const ExpressionMatrix& test, int classes) {
  Matrix centroids = Matrix::Zero(classes, train.n_genes());
  std::vector<int> counts(classes, 0);
  for (Index c = 0; c < train.n_cells(); ++c) {
    const int l = (*train.labels)[c];
    centroids.row(l) += train.dense_row(c).transpose();
    ++counts[l];
  }
  for (int k = 0; k < classes; ++k)
    if (counts[k] > 0) centroids.row(k) /= counts[k];
  int correct = 0;
  for (Index c = 0; c < test.n_cells(); ++c) {
    const Eigen::RowVectorXd x = test.dense_row(c).transpose();
    Index best = 0;
    (centroids.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
    if (best == (*test.labels)[c]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.n_cells());
}

struct Cohesion {
  double within = 0.0;
  double across = 0.0;
};

// Mean pairwise cosine similarity within and across labels.
inline Cohesion cosine_cohesion(const Matrix& embeddings, const std::vector<int>& labels) {
  Matrix unit = embeddings;
  for (Index i = 0; i < unit.rows(); ++i) unit.row(i) /= unit.row(i).norm();
  const Matrix cos = unit * unit.transpose();
  double within = 0.0, across = 0.0;
  long n_within = 0, n_across = 0;
  for (Index i = 0; i < cos.rows(); ++i)
    for (Index j = i + 1; j < cos.cols(); ++j) {
      if (labels[i] == labels[j]) {
        within += cos(i, j);
        ++n_within;
      } else {
        across += cos(i, j);
        ++n_across;
      }
    }
  return {within / static_cast<double>(n_within), across / static_cast<double>(n_across)};
}

// Two-pass Pearson correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace schyena::oracle
