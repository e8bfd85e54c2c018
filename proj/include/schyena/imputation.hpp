#pragma once

// Masked-value prediction over whole matrices: full zero imputation, the
// five-group nonzero evaluation protocol, and embedding export.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "schyena/data.hpp"
#include "schyena/metrics.hpp"
#include "schyena/model.hpp"

namespace schyena {

// Predicts every position of one cell given which positions are hidden.
class ExpressionPredictor {
 public:
  virtual ~ExpressionPredictor() = default;
  virtual Index genes() const = 0;
  virtual Vector predict(Index cell, const Vector& expressions, const MaskPlan& mask) const = 0;
};

class ModelPredictor final : public ExpressionPredictor {
 public:
  explicit ModelPredictor(const ModelParams& model) : model_(model) {}
  Index genes() const override { return model_.config.genes; }
  Vector predict(Index cell, const Vector& expressions, const MaskPlan& mask) const override;

 private:
  const ModelParams& model_;
};

// Predicts each gene's mean over a reference matrix (zeros included).
class MeanPredictor final : public ExpressionPredictor {
 public:
  explicit MeanPredictor(const ExpressionMatrix& reference);
  Index genes() const override { return means_.size(); }
  Vector predict(Index cell, const Vector& expressions, const MaskPlan& mask) const override;
  const Vector& means() const { return means_; }

 private:
  Vector means_;
};

// Returns the true values of a known matrix; used to validate the protocol.
class OraclePredictor final : public ExpressionPredictor {
 public:
  explicit OraclePredictor(const ExpressionMatrix& truth) : truth_(truth) {}
  Index genes() const override { return truth_.n_genes(); }
  Vector predict(Index cell, const Vector& expressions, const MaskPlan& mask) const override;

 private:
  const ExpressionMatrix& truth_;
};

// Imputes every zero: the zeros are split into ten random groups, each
// group is masked and predicted separately, and the predictions (clamped at
// 0) are merged. Observed nonzero values are copied unchanged.
Matrix impute_matrix(const ExpressionMatrix& m, const ExpressionPredictor& predictor, std::uint64_t seed,
                     int threads = 0);

enum class GroupKind { nonzero_eval, zero_impute };

struct ImputationGroupResult {
  int group = 0;
  GroupKind kind = GroupKind::nonzero_eval;
  std::size_t count = 0;
  double mse = 0.0;
  std::optional<double> pearson;
};

struct ImputationReport {
  std::string predictor;
  std::vector<ImputationGroupResult> groups;
  double mean_mse() const;
  double mean_pearson() const;  // NaN if any group is undefined
};

// Splits the nonzero entries into five groups; each group is masked,
// predicted, and scored (pooled MSE and Pearson r) on its masked slots.
ImputationReport evaluate_imputation(const ExpressionMatrix& m, const ExpressionPredictor& predictor,
                                     std::uint64_t seed, const std::string& name = "model", int threads = 0);

void write_imputation_reports(const std::vector<ImputationReport>& reports, const std::filesystem::path& path);

// One row per cell: cell_id,label,batch,e0..e{D-1}.
void export_embeddings(const ExpressionMatrix& m, const ModelParams& model, const std::filesystem::path& path,
                       int threads = 0);

Matrix cell_embeddings(const ExpressionMatrix& m, const ModelParams& model, int threads = 0);

}  // namespace schyena
