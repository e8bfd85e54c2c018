#pragma once

// Losses, the AdamW optimizer, and the pretraining / fine-tuning loops.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "schyena/data.hpp"
#include "schyena/model.hpp"

namespace schyena {

// Sum of squared errors over masked positions. Returns nothing for an
// empty mask: the cell contributes no loss and no gradient.
std::optional<Tensor> mem_loss(const Tensor& predicted, const Vector& target, const MaskPlan& mask);

// Softmax cross-entropy of a 1×C logit row against a class index.
Tensor classify_loss(const Tensor& logits, int label);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig hyper;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;

  static OptimizerState for_parameters(std::span<const NamedParameter> params, const AdamWConfig& hyper);
};

// One bias-corrected Adam update followed by decoupled weight decay
// θ ← θ − lr·λ·θ on parameters flagged for decay.
void adamw_step(std::span<const NamedParameter> params, std::span<const Matrix> grads, OptimizerState& state);

enum class Task { pretrain, classify, impute };

struct TrainConfig {
  Task task = Task::pretrain;
  int epochs = 2;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double validation_fraction = 0.1;
  double mask_min = kMemMaskMin;
  double mask_max = kMemMaskMax;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: worker_count()

  static TrainConfig pretraining();
  static TrainConfig finetuning(Task task);
  void validate() const;
};

struct TraceRow {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double mask_probability = 0.0;  // 0 for classification steps
};

struct PretrainResult {
  std::vector<TraceRow> trace;
};

// Loss of the batch member at `slot`. Returning nothing skips that cell.
using CellLoss = std::function<std::optional<Tensor>(const ModelParams& params, std::size_t slot)>;

struct BatchGradient {
  std::vector<Matrix> grads;  // aligned with ModelParams::parameters()
  double mean_loss = 0.0;
  int contributing = 0;
};

// Averages per-cell gradients over contributing cells. Each cell is
// differentiated against its own parameter copy, and the per-cell results
// are summed in cell order, so the outcome does not depend on threads.
BatchGradient batch_gradient(const ModelParams& model, std::size_t batch_size, const CellLoss& loss, int threads);

// MEM pretraining: per batch, draw p ~ U[mask_min, mask_max], mask each
// cell's nonzero genes, minimize the cell-averaged masked SSE.
PretrainResult pretrain(const ExpressionMatrix& corpus, const TrainConfig& config, ModelParams& model);

struct FinetuneResult {
  ModelParams best;
  int best_epoch = -1;
  std::vector<double> validation_metric;  // macro-F1 (classify) or masked MSE (impute)
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;
  std::vector<Index> validation_cells;  // indices into the corpus
};

// Holds out validation_fraction of the corpus, trains for the configured
// epochs, and returns the parameters of the best validation epoch.
FinetuneResult finetune(const ExpressionMatrix& corpus, const TrainConfig& config, const ModelParams& model);

int select_best_epoch(std::span<const double> metrics, bool higher_is_better);

// Batch classification helpers.
std::vector<int> predict_classes(const ExpressionMatrix& m, const ModelParams& model, int threads = 0);
Matrix class_logits(const ExpressionMatrix& m, const ModelParams& model, int threads = 0);

}  // namespace schyena
