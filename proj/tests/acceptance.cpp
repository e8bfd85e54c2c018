// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance [--only 1,2,...]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "schyena/bench.hpp"
#include "schyena/checkpoint.hpp"
#include "schyena/gradcheck.hpp"
#include "schyena/imputation.hpp"
#include "schyena/metrics.hpp"
#include "schyena/training.hpp"

using namespace schyena;

namespace {

// Desk-scale training settings for criteria 7, 8 and 11.
constexpr Index kWidth = 64;
constexpr double kPretrainLr = 1e-3;
constexpr double kFinetuneLr = 5e-4;
constexpr double kTestFraction = 0.25;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

Outcome conv_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const Index lengths[] = {1, 2, 7, 64, 257};
  double worst = 0.0;
  int cases = 0;
  for (ConvMode mode : {ConvMode::causal, ConvMode::bidirectional})
    for (int i = 0; i < 200; ++i) {
      const Index length = lengths[i % 5];
      const SeqVector<double> u = random_matrix(length, 1, rng);
      const Filter<double> h(random_matrix(filter_length(length, mode), 1, rng), mode, length);
      worst = std::max(worst, (fft_conv(u, h) - toeplitz_conv(u, h)).cwiseAbs().maxCoeff());
      ++cases;
    }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-9 && elapsed < 30.0,
          std::to_string(cases) + " pairs, max |fft - toeplitz| = " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Outcome bidirectionality() {
  std::mt19937_64 rng(102);
  const Index length = 32, width = 8;
  const HyenaParams p = HyenaParams::init(width, 3, 32, 8, length, rng);
  double grad[2] = {0.0, 0.0};
  for (ConvMode mode : {ConvMode::causal, ConvMode::bidirectional}) {
    Tensor u(random_matrix(length, width, rng), true);
    sum(slice_rows(hyena_forward(u, p, mode), 0, 1)).backward();
    grad[mode == ConvMode::bidirectional] = u.grad().row(length - 1).cwiseAbs().maxCoeff();
  }
  return {grad[1] > 0.0 && grad[0] == 0.0,
          "max |dy_0/du_{L-1}|: bidirectional " + fmt(grad[1]) + ", causal " + fmt(grad[0])};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto entries = gradcheck_model({});
  double worst = 0.0;
  bool ok = !entries.empty();
  for (const auto& e : entries) {
    worst = std::max(worst, e.error);
    ok = ok && e.passed;
  }
  const double elapsed = seconds_since(t0);
  return {ok && elapsed < 300.0, std::to_string(entries.size()) + " parameter tensors, max relative error " +
                                     fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Outcome mask_gradient() {
  ModelConfig config;
  config.genes = 24;
  config.width = 8;
  config.blocks = 2;
  config.order = 2;
  config.filter_hidden = 8;
  config.frequencies = 4;
  const ModelParams model = ModelParams::init(config, 103);
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> value(0.2, 3.0);
  Vector cell(config.genes);
  for (Index i = 0; i < cell.size(); ++i) cell(i) = value(rng);
  const MaskPlan mask = mask_from_positions(cell, {1, 5, 6, 17});
  Tensor predicted = forward_mem(cell, mask, model).detached(true);
  mem_loss(predicted, cell, mask)->backward();
  int unmasked_nonzero = 0, masked_zero = 0;
  const std::set<Index> hidden(mask.positions.begin(), mask.positions.end());
  for (Index i = 0; i < cell.size(); ++i) {
    const double g = predicted.grad()(i, 0);
    if (hidden.count(i)) masked_zero += g == 0.0;
    else unmasked_nonzero += g != 0.0;
  }
  return {unmasked_nonzero == 0 && masked_zero == 0,
          std::to_string(unmasked_nonzero) + " nonzero gradients at " + std::to_string(cell.size() - 4) +
              " unmasked positions, " + std::to_string(masked_zero) + " zero gradients at 4 masked positions"};
}

bool within_3sigma(long hits, long n, double p) {
  return std::abs(static_cast<double>(hits) - static_cast<double>(n) * p) <=
         3.0 * std::sqrt(static_cast<double>(n) * p * (1.0 - p));
}

Outcome masking_statistics() {
  const Index n = 20000;
  Vector cell = Vector::Zero(2 * n);
  for (Index i = 0; i < n; ++i) cell(2 * i) = 1.0 + static_cast<double>(i % 7);
  std::mt19937_64 rng(105);

  long mem_hits = 0, mem_zero_hits = 0;
  const MaskPlan mem = make_mem_mask(cell, 0.4, rng);
  for (Index pos : mem.positions) (cell(pos) != 0.0 ? mem_hits : mem_zero_hits) += 1;

  long imp_nonzero = 0, imp_zero = 0;
  const MaskPlan imp = make_imputation_mask(cell, rng);
  for (Index pos : imp.positions) (cell(pos) != 0.0 ? imp_nonzero : imp_zero) += 1;

  const bool ok = within_3sigma(mem_hits, n, 0.4) && mem_zero_hits == 0 &&
                  within_3sigma(imp_nonzero, n, kImputeMaskNonzero) && within_3sigma(imp_zero, n, kImputeMaskZero);
  const double nd = static_cast<double>(n);
  return {ok, "MEM rate " + fmt(mem_hits / nd) + " (zeros masked: " + std::to_string(mem_zero_hits) +
                  "), imputation rates " + fmt(imp_nonzero / nd) + " nonzero / " + fmt(imp_zero / nd) + " zero over " +
                  std::to_string(n) + "+" + std::to_string(n) + " positions"};
}

Outcome preprocessing() {
  const Index cells = 300, genes = 120;
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> depth(0.2, 12.0);
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> totals(cells, 0.0);
  for (Index c = 0; c < cells; ++c) {
    std::poisson_distribution<int> counts(depth(rng));
    for (Index g = 0; g < genes; ++g) {
      const int k = counts(rng);
      if (k > 0) {
        triplets.emplace_back(c, g, k);
        totals[c] += k;
      }
    }
  }
  ExpressionMatrix raw;
  raw.values.resize(cells, genes);
  raw.values.setFromTriplets(triplets.begin(), triplets.end());
  for (Index g = 0; g < genes; ++g) raw.gene_ids.push_back("g" + std::to_string(g));
  for (Index c = 0; c < cells; ++c) raw.cell_ids.push_back("c" + std::to_string(c));

  const ExpressionMatrix out = preprocess(raw);
  std::set<std::string> expected;
  for (Index c = 0; c < cells; ++c)
    if (totals[c] >= 200.0) expected.insert(raw.cell_ids[c]);
  const std::set<std::string> kept(out.cell_ids.begin(), out.cell_ids.end());
  double worst = 0.0;
  for (Index c = 0; c < out.n_cells(); ++c)
    worst = std::max(worst, std::abs(out.dense_row(c).array().exp().sum() - static_cast<double>(genes) - 10000.0));
  return {kept == expected && worst <= 1e-6, std::to_string(cells - out.n_cells()) + " of " + std::to_string(cells) +
                                                 " cells below 200 removed, max |total - 10000| = " + fmt(worst)};
}

// Shared state for the synthetic-corpus criteria.
struct SyntheticRun {
  ExpressionMatrix all, train, test;
  ModelParams pretrained;
  double pretrain_seconds = 0.0;
  std::optional<ModelParams> classifier;
};

SyntheticRun& synthetic_run() {
  static std::optional<SyntheticRun> run;
  if (run) return *run;
  run.emplace();
  SyntheticSpec spec;
  spec.n_cells = 400;
  spec.n_genes = 256;
  spec.n_types = 4;
  spec.boost = 20.0;
  spec.dropout = 0.3;
  spec.seed = 7;
  run->all = preprocess(generate_synthetic(spec).matrix);
  std::tie(run->train, run->test) = split_train_test(run->all, kTestFraction, 11);
  const auto t0 = Clock::now();
  ModelConfig config;
  config.genes = spec.n_genes;
  config.width = kWidth;
  run->pretrained = ModelParams::init(config, 1);
  TrainConfig pre = TrainConfig::pretraining();
  pre.epochs = 2;
  pre.lr = kPretrainLr;
  pre.seed = 3;
  pretrain(run->train, pre, run->pretrained);
  run->pretrain_seconds = seconds_since(t0);
  return *run;
}

Outcome synthetic_classification() {
  SyntheticRun& run = synthetic_run();
  const int classes = static_cast<int>(run.all.class_names.size());
  const double centroid = oracle::centroid_accuracy(run.train, run.test, classes);
  if (centroid < 0.95) return {false, "centroid oracle accuracy " + fmt(centroid) + " < 0.95: corpus not separable"};
  const auto t0 = Clock::now();
  TrainConfig config = TrainConfig::finetuning(Task::classify);
  config.epochs = 5;
  config.lr = kFinetuneLr;
  config.seed = 5;
  FinetuneResult result = finetune(run.train, config, run.pretrained);
  const ClassificationReport report = f1_report(*run.test.labels, predict_classes(run.test, result.best), classes);
  run.classifier = std::move(result.best);
  const double elapsed = run.pretrain_seconds + seconds_since(t0);
  return {report.macro_f1 >= 0.90 && elapsed < 1800.0,
          "test macro-F1 " + fmt(report.macro_f1) + " (centroid oracle " + fmt(centroid) + "), " + fmt(elapsed) + " s"};
}

Outcome synthetic_imputation() {
  SyntheticRun& run = synthetic_run();
  const auto t0 = Clock::now();
  TrainConfig config = TrainConfig::finetuning(Task::impute);
  config.epochs = 5;
  config.lr = kFinetuneLr;
  config.seed = 6;
  const FinetuneResult result = finetune(run.train, config, run.pretrained);
  const ImputationReport model = evaluate_imputation(run.test, ModelPredictor(result.best), 9, "model");
  const ImputationReport mean = evaluate_imputation(run.test, MeanPredictor(run.train), 9, "gene-mean");
  const double elapsed = run.pretrain_seconds + seconds_since(t0);
  const bool ok = model.mean_mse() <= 0.8 * mean.mean_mse() && model.mean_pearson() >= mean.mean_pearson() &&
                  elapsed < 1800.0;
  return {ok, "model MSE " + fmt(model.mean_mse()) + " r " + fmt(model.mean_pearson()) + " vs gene-mean MSE " +
                  fmt(mean.mean_mse()) + " r " + fmt(mean.mean_pearson()) + ", " + fmt(elapsed) + " s"};
}

Outcome scaling() {
  const auto timings = benchmark_conv({1024, 8192}, ConvMode::bidirectional, 3, 109);
  const double fft_ratio = timings[1].fft_seconds / timings[0].fft_seconds;
  const double toeplitz_ratio = timings[1].toeplitz_seconds / timings[0].toeplitz_seconds;
  return {fft_ratio < 16.0 && toeplitz_ratio > 32.0,
          "time(8192)/time(1024): fft " + fmt(fft_ratio) + ", toeplitz " + fmt(toeplitz_ratio)};
}

Outcome checkpoint_round_trip() {
  ModelConfig config;
  config.genes = 40;
  config.width = 16;
  config.blocks = 2;
  config.order = 3;
  config.filter_hidden = 16;
  config.frequencies = 4;
  config.num_classes = 5;
  const ModelParams model = ModelParams::init(config, 110);
  const auto dir = std::filesystem::temp_directory_path() / "schyena_acceptance_checkpoint";
  std::filesystem::remove_all(dir);
  save_checkpoint(model, dir);
  const ModelParams loaded = load_checkpoint(dir).model;
  std::filesystem::remove_all(dir);

  std::mt19937_64 rng(111);
  int mismatches = 0;
  NoGradGuard no_grad;
  for (int trial = 0; trial < 5; ++trial) {
    Vector cell = random_matrix(config.genes, 1, rng).cwiseAbs();
    const MaskPlan mask = make_mem_mask(cell, 0.3, rng);
    mismatches += forward_mem(cell, mask, model).value() != forward_mem(cell, mask, loaded).value();
    mismatches += forward_classify(cell, model).value() != forward_classify(cell, loaded).value();
    mismatches += extract_cell_embedding(cell, model) != extract_cell_embedding(cell, loaded);
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 15 forward outputs differ bitwise"};
}

Outcome embedding_cohesion() {
  SyntheticRun& run = synthetic_run();
  const oracle::Cohesion c = oracle::cosine_cohesion(cell_embeddings(run.all, run.pretrained), *run.all.labels);
  return {c.within - c.across >= 0.05,
          "within " + fmt(c.within) + ", across " + fmt(c.across) + ", gap " + fmt(c.within - c.across)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
    }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"convolution oracle", conv_oracle},
      {"bidirectionality", bidirectionality},
      {"gradient suite", gradient_suite},
      {"masked loss gradient", mask_gradient},
      {"masking statistics", masking_statistics},
      {"preprocessing", preprocessing},
      {"synthetic classification", synthetic_classification},
      {"synthetic imputation", synthetic_imputation},
      {"convolution scaling", scaling},
      {"checkpoint round trip", checkpoint_round_trip},
      {"embedding cohesion", embedding_cohesion},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.passed;
    std::cout << "criterion " << number << " " << criteria[i].first << ": " << (outcome.passed ? "PASS" : "FAIL")
              << " (" << outcome.detail << ")" << std::endl;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
