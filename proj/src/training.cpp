#include "schyena/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "schyena/metrics.hpp"
#include "schyena/parallel.hpp"

namespace schyena {

namespace {

int resolve_threads(int threads) { return threads > 0 ? threads : worker_count(); }

std::string trace_dump(const std::vector<TraceRow>& trace, std::size_t last = 10) {
  std::ostringstream os;
  os << "step,epoch,loss,lr,p\n";
  const std::size_t from = trace.size() > last ? trace.size() - last : 0;
  for (std::size_t i = from; i < trace.size(); ++i) {
    const auto& r = trace[i];
    os << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.lr << ',' << r.mask_probability << '\n';
  }
  return os.str();
}

void require_corpus(const ExpressionMatrix& corpus, const ModelParams& model) {
  if (!corpus.normalized) throw ContractError("training expects a preprocessed (log-normalized) corpus");
  if (corpus.n_genes() != model.config.genes)
    throw ConfigError("corpus has " + std::to_string(corpus.n_genes()) + " genes but the model expects " +
                      std::to_string(model.config.genes));
  if (corpus.n_cells() == 0) throw EmptyCorpusError("training corpus has no cells");
}

void apply_step(ModelParams& model, const BatchGradient& batch, OptimizerState& state) {
  const auto params = model.parameters();
  adamw_step(params, batch.grads, state);
}

}  // namespace

std::optional<Tensor> mem_loss(const Tensor& predicted, const Vector& target, const MaskPlan& mask) {
  if (predicted.rows() != target.size() || predicted.cols() != 1)
    throw DimensionError("mem_loss: predictions of " + std::to_string(predicted.rows()) + "×" +
                         std::to_string(predicted.cols()) + " for " + std::to_string(target.size()) + " targets");
  if (mask.empty()) return std::nullopt;
  const Tensor picked = gather_rows(predicted, mask.positions);
  Matrix expected(static_cast<Index>(mask.size()), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) expected(static_cast<Index>(i), 0) = target(mask.positions[i]);
  const Tensor diff = sub(picked, Tensor(std::move(expected)));
  return sum(mul(diff, diff));
}

Tensor classify_loss(const Tensor& logits, int label) {
  if (logits.rows() != 1) throw DimensionError("classify_loss: expected a single logit row");
  const Index classes = logits.cols();
  if (label < 0 || label >= classes) throw IndexError("classify_loss: label outside class range", label);
  const Eigen::RowVectorXd z = logits.value().row(0);
  const double peak = z.maxCoeff();
  const Eigen::RowVectorXd shifted = (z.array() - peak).exp();
  const double total = shifted.sum();
  const double loss = std::log(total) + peak - z(label);
  Eigen::RowVectorXd softmax = shifted / total;
  return Tensor::record(Matrix::Constant(1, 1, loss), {}, {logits},
                        [softmax, label](const Matrix& dy, std::span<Matrix* const> g) {
                          Eigen::RowVectorXd d = softmax;
                          d(label) -= 1.0;
                          g[0]->row(0) += dy(0, 0) * d;
                        });
}

OptimizerState OptimizerState::for_parameters(std::span<const NamedParameter> params, const AdamWConfig& hyper) {
  OptimizerState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first_moment.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    s.second_moment.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
  return s;
}

void adamw_step(std::span<const NamedParameter> params, std::span<const Matrix> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw DimensionError("adamw_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].tensor.rows() || grads[i].cols() != params[i].tensor.cols())
      throw DimensionError("adamw_step: gradient shape mismatch for " + params[i].name);
    if (!grads[i].allFinite()) throw NonFiniteGradientError("non-finite gradient in parameter " + params[i].name);
  }
  const AdamWConfig& h = state.hyper;
  ++state.step;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor handle = params[i].tensor;
    Matrix& theta = handle.mutable_value();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = h.beta1 * m + (1.0 - h.beta1) * grads[i];
    v = h.beta2 * v + (1.0 - h.beta2) * grads[i].cwiseAbs2();
    if (params[i].decay && h.weight_decay != 0.0) theta *= 1.0 - h.lr * h.weight_decay;
    theta.array() -= h.lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + h.epsilon);
  }
}

TrainConfig TrainConfig::pretraining() { return {}; }

TrainConfig TrainConfig::finetuning(Task task) {
  TrainConfig c;
  c.task = task;
  c.epochs = 5;
  c.lr = 1e-5;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(mask_min >= kMemMaskMin && mask_max <= kMemMaskMax && mask_min <= mask_max))
    throw ConfigError("mask probability range must lie within [0.05, 0.4]");
  if (task != Task::pretrain && !(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0, 1) for fine-tuning");
}

BatchGradient batch_gradient(const ModelParams& model, std::size_t batch_size, const CellLoss& loss, int threads) {
  const std::size_t n = batch_size;
  std::vector<std::vector<Matrix>> per_cell(n);
  std::vector<double> losses(n, 0.0);
  std::vector<char> contributed(n, 0);
  parallel_for(
      static_cast<Index>(n),
      [&](Index i) {
        const ModelParams local = model.clone();
        const std::optional<Tensor> l = loss(local, static_cast<std::size_t>(i));
        if (!l) return;
        l->backward();
        losses[i] = l->item();
        contributed[i] = 1;
        for (const auto& p : local.parameters()) per_cell[i].push_back(p.tensor.grad());
      },
      resolve_threads(threads));

  BatchGradient out;
  for (const auto& p : model.parameters()) out.grads.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    if (!contributed[i]) continue;
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += per_cell[i][k];
    out.mean_loss += losses[i];
    ++out.contributing;
  }
  if (out.contributing > 0) {
    const double inv = 1.0 / out.contributing;
    for (auto& g : out.grads) g *= inv;
    out.mean_loss *= inv;
  }
  return out;
}

PretrainResult pretrain(const ExpressionMatrix& corpus, const TrainConfig& config, ModelParams& model) {
  config.validate();
  require_corpus(corpus, model);
  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(corpus.n_cells()));
  std::iota(order.begin(), order.end(), Index{0});
  OptimizerState state = OptimizerState::for_parameters(model.parameters(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::uniform_real_distribution<double> mask_probability(config.mask_min, config.mask_max);

  PretrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> batch(order.data() + start, stop - start);
      const double p = mask_probability(rng);
      std::vector<MaskPlan> masks;
      for (Index cell : batch) masks.push_back(make_mem_mask(corpus.dense_row(cell), p, rng));
      const BatchGradient g = batch_gradient(
          model, batch.size(),
          [&](const ModelParams& local, std::size_t slot) -> std::optional<Tensor> {
            const Vector expressions = corpus.dense_row(batch[slot]);
            const MaskPlan& mask = masks[slot];
            if (mask.empty()) return std::nullopt;
            return mem_loss(forward_mem(expressions, mask, local), expressions, mask);
          },
          config.threads);
      if (g.contributing == 0) continue;
      result.trace.push_back({state.step + 1, epoch, g.mean_loss, config.lr, p});
      if (!std::isfinite(g.mean_loss))
        throw TrainingDivergedError("pretraining loss became non-finite; recent trace:\n" + trace_dump(result.trace));
      apply_step(model, g, state);
    }
  }
  return result;
}

int select_best_epoch(std::span<const double> metrics, bool higher_is_better) {
  int best = -1;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (!std::isfinite(metrics[i])) continue;
    if (best < 0 || (higher_is_better ? metrics[i] > metrics[best] : metrics[i] < metrics[best]))
      best = static_cast<int>(i);
  }
  return best;
}

Matrix class_logits(const ExpressionMatrix& m, const ModelParams& model, int threads) {
  if (!model.cls_head) throw ConfigError("model has no classification head");
  Matrix out(m.n_cells(), *model.config.num_classes);
  parallel_for(
      m.n_cells(),
      [&](Index c) {
        NoGradGuard no_grad;
        out.row(c) = forward_classify(m.dense_row(c), model).value().row(0);
      },
      resolve_threads(threads));
  return out;
}

std::vector<int> predict_classes(const ExpressionMatrix& m, const ModelParams& model, int threads) {
  const Matrix logits = class_logits(m, model, threads);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index c = 0; c < logits.rows(); ++c) {
    Index best = 0;
    logits.row(c).maxCoeff(&best);
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

FinetuneResult finetune(const ExpressionMatrix& corpus, const TrainConfig& config, const ModelParams& model) {
  if (config.task == Task::pretrain) throw ConfigError("finetune needs task classify or impute");
  config.validate();
  if (corpus.split == SplitTag::test) throw ContractError("fine-tuning must not read cells from a test split");
  require_corpus(corpus, model);

  FinetuneResult result;
  ModelParams current = model.clone();
  const bool classify = config.task == Task::classify;
  int n_classes = 0;
  if (classify) {
    if (!corpus.labels) throw ConfigError("classification fine-tuning needs cell labels");
    n_classes = static_cast<int>(corpus.class_names.size());
    if (!current.cls_head || current.config.num_classes != n_classes)
      current.reset_classifier(n_classes, config.seed ^ 0xc15c15ull);
  }

  // Validation hold-out.
  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(corpus.n_cells()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::clamp<long long>(std::llround(config.validation_fraction * static_cast<double>(order.size())), 1,
                            static_cast<long long>(order.size()) - 1));
  std::vector<Index> validation(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(validation.begin(), validation.end());
  result.validation_cells = validation;
  const ExpressionMatrix val_matrix = corpus.select_cells(validation);

  if (classify) {
    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (Index c : train) seen[static_cast<std::size_t>((*corpus.labels)[c])] = true;
    for (int k = 0; k < n_classes; ++k)
      if (!seen[k]) {
        result.warnings.push_back("class '" + corpus.class_names[k] +
                                  "' has no training cells; it stays in the classification head");
        std::cerr << "warning: " << result.warnings.back() << '\n';
      }
  }

  // Fixed validation masks so the imputation metric is comparable across epochs.
  std::vector<MaskPlan> val_masks;
  if (!classify) {
    std::mt19937_64 mask_rng(config.seed ^ 0x5eed5eedull);
    for (Index c = 0; c < val_matrix.n_cells(); ++c) val_masks.push_back(make_imputation_mask(val_matrix.dense_row(c), mask_rng));
  }
  auto validation_metric = [&](const ModelParams& params) {
    if (classify) {
      const std::vector<int> predicted = predict_classes(val_matrix, params, config.threads);
      return f1_report(*val_matrix.labels, predicted, n_classes).macro_f1;
    }
    std::vector<double> sq(static_cast<std::size_t>(val_matrix.n_cells()), 0.0);
    std::vector<std::size_t> count(sq.size(), 0);
    parallel_for(
        val_matrix.n_cells(),
        [&](Index c) {
          NoGradGuard no_grad;
          const MaskPlan& mask = val_masks[static_cast<std::size_t>(c)];
          if (mask.empty()) return;
          const Vector x = val_matrix.dense_row(c);
          const Matrix pred = forward_mem(x, mask, params).value();
          for (Index pos : mask.positions) sq[c] += std::pow(pred(pos, 0) - x(pos), 2);
          count[c] = mask.size();
        },
        resolve_threads(config.threads));
    const double total = std::accumulate(sq.begin(), sq.end(), 0.0);
    const auto n = std::accumulate(count.begin(), count.end(), std::size_t{0});
    return n > 0 ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  };

  OptimizerState state =
      OptimizerState::for_parameters(current.parameters(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(train.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> batch(train.data() + start, stop - start);
      std::vector<MaskPlan> masks;
      if (!classify)
        for (Index cell : batch) masks.push_back(make_imputation_mask(corpus.dense_row(cell), rng));
      const BatchGradient g = batch_gradient(
          current, batch.size(),
          [&](const ModelParams& local, std::size_t slot) -> std::optional<Tensor> {
            const Index cell = batch[slot];
            const Vector expressions = corpus.dense_row(cell);
            if (classify) return classify_loss(forward_classify(expressions, local), (*corpus.labels)[cell]);
            const MaskPlan& mask = masks[slot];
            if (mask.empty()) return std::nullopt;
            return mem_loss(forward_mem(expressions, mask, local), expressions, mask);
          },
          config.threads);
      if (g.contributing == 0) continue;
      result.trace.push_back({state.step + 1, epoch, g.mean_loss, config.lr, classify ? 0.0 : kImputeMaskNonzero});
      if (!std::isfinite(g.mean_loss))
        throw TrainingDivergedError("fine-tuning loss became non-finite; recent trace:\n" + trace_dump(result.trace));
      apply_step(current, g, state);
    }
    const double metric = validation_metric(current);
    result.validation_metric.push_back(metric);
    if (select_best_epoch(result.validation_metric, classify) == epoch) {
      result.best = current.clone();
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch < 0) {
    result.best = current.clone();
    result.best_epoch = config.epochs - 1;
  }
  return result;
}

}  // namespace schyena
