#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include <json.hpp>

#include "oracles.hpp"
#include "schyena/checkpoint.hpp"
#include "schyena/imputation.hpp"
#include "schyena/metrics.hpp"

using namespace schyena;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("schyena_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig small_config(Index genes, std::optional<Index> classes = std::nullopt) {
  ModelConfig c;
  c.genes = genes;
  c.width = 6;
  c.blocks = 2;
  c.order = 2;
  c.filter_hidden = 8;
  c.frequencies = 3;
  c.num_classes = classes;
  return c;
}

ExpressionMatrix small_corpus(Index cells, Index genes, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_cells = cells;
  spec.n_genes = genes;
  spec.program_genes = genes / 8;
  spec.baseline_mean = 100.0;
  spec.seed = seed;
  return preprocess(generate_synthetic(spec).matrix);
}

}  // namespace

TEST(F1Report, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  const auto r = f1_report(y, y, 3);
  for (double f : r.f1) EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(r.micro_f1, 1.0);
  EXPECT_DOUBLE_EQ(r.weighted_f1, 1.0);
}

TEST(F1Report, ConstantPredictorOnBalancedPair) {
  const std::vector<int> y{0, 0, 1, 1}, p{0, 0, 0, 0};
  const auto r = f1_report(y, p, 2);
  EXPECT_NEAR(r.f1[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.f1[1], 0.0);
  EXPECT_NEAR(r.macro_f1, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.precision[0], 0.5, 1e-15);
  EXPECT_NEAR(r.recall[0], 1.0, 1e-15);
}

TEST(F1Report, DegenerateClassFlagged) {
  const std::vector<int> y{0, 1, 0}, p{0, 1, 1};
  const auto r = f1_report(y, p, 3);
  EXPECT_EQ(r.f1[2], 0.0);
  EXPECT_TRUE(r.degenerate[2]);
  EXPECT_FALSE(r.degenerate[0]);
}

TEST(F1Report, ConfusionRowsSumToSupport) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> y(200), p(200);
  for (int i = 0; i < 200; ++i) y[i] = cls(rng), p[i] = cls(rng);
  const auto r = f1_report(y, p, 5);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(r.confusion.row(k).sum(), r.support[k]);
}

TEST(F1Report, MicroEqualsAccuracyOnRandomConfusions) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    std::uniform_int_distribution<int> cls(0, 2 + rep % 6);
    const int k = 3 + rep % 6;
    std::vector<int> y(97), p(97);
    int correct = 0;
    for (int i = 0; i < 97; ++i) {
      y[i] = cls(rng);
      p[i] = cls(rng) % k;
      correct += y[i] == p[i];
    }
    const auto r = f1_report(y, p, k);
    EXPECT_NEAR(r.micro_f1, correct / 97.0, 1e-14);
    EXPECT_NEAR(r.accuracy, correct / 97.0, 1e-14);
  }
}

TEST(F1Report, WeightedEqualsMacroWhenBalanced) {
  std::mt19937_64 rng(3);
  std::vector<int> y, p;
  std::uniform_int_distribution<int> cls(0, 3);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 25; ++i) {
      y.push_back(k);
      p.push_back(cls(rng));
    }
  const auto r = f1_report(y, p, 4);
  EXPECT_NEAR(r.weighted_f1, r.macro_f1, 1e-14);
}

TEST(F1Report, LengthMismatchAndRange) {
  const std::vector<int> y{0, 1}, p{0};
  EXPECT_THROW(f1_report(y, p, 2), ContractError);
  const std::vector<int> bad{0, 5};
  EXPECT_THROW(f1_report(y, bad, 2), std::exception);
}

TEST(MsePearson, IdenticalAndNegated) {
  const std::vector<double> x{-1.5, 0.5, 1.0, 0.0}, neg{1.5, -0.5, -1.0, 0.0};
  const auto same = mse_pearson(x, x);
  EXPECT_EQ(same.mse, 0.0);
  EXPECT_NEAR(*same.pearson, 1.0, 1e-15);
  EXPECT_NEAR(*mse_pearson(x, neg).pearson, -1.0, 1e-15);
}

TEST(MsePearson, ZeroVarianceIsUndefined) {
  const std::vector<double> x{1, 2, 3}, c{2, 2, 2};
  const auto r = mse_pearson(x, c);
  EXPECT_FALSE(r.pearson.has_value());
  EXPECT_NEAR(r.mse, 2.0 / 3.0, 1e-15);
}

TEST(MsePearson, MatchesTwoPassReference) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist(3.0, 2.0);
  std::vector<double> a(500), b(500);
  double mse = 0.0;
  for (int i = 0; i < 500; ++i) {
    a[i] = dist(rng);
    b[i] = 0.6 * a[i] + dist(rng);
    mse += (a[i] - b[i]) * (a[i] - b[i]);
  }
  const auto r = mse_pearson(a, b);
  EXPECT_NEAR(r.mse, mse / 500.0, 1e-12);
  EXPECT_NEAR(*r.pearson, oracle::pearson(a, b), 1e-12);
  EXPECT_GE(*r.pearson, -1.0);
  EXPECT_LE(*r.pearson, 1.0);
}

TEST(MsePearson, RejectsEmptyOrMismatched) {
  const std::vector<double> a{1.0}, e;
  EXPECT_THROW(mse_pearson(e, e), ContractError);
  EXPECT_THROW(mse_pearson(a, e), ContractError);
}

TEST(ImputeMatrix, NoZerosIsIdentity) {
  ExpressionMatrix m;
  m.values = Matrix::Constant(3, 4, 1.25).sparseView();
  m.gene_ids = {"a", "b", "c", "d"};
  m.cell_ids = {"x", "y", "z"};
  const ModelParams model = ModelParams::init(small_config(4), 1);
  EXPECT_EQ(impute_matrix(m, ModelPredictor(model), 2), Matrix::Constant(3, 4, 1.25));
}

namespace {

// Records which positions it was asked to predict.
class CountingPredictor final : public ExpressionPredictor {
 public:
  explicit CountingPredictor(Index genes) : genes_(genes) {}
  Index genes() const override { return genes_; }
  Vector predict(Index cell, const Vector&, const MaskPlan& mask) const override {
    std::lock_guard<std::mutex> lock(mutex_);
    for (Index pos : mask.positions) ++hits_[{cell, pos}];
    Vector out = Vector::Constant(genes_, -1.0);
    for (Index pos : mask.positions) out(pos) = 0.5 + static_cast<double>(pos);
    return out;
  }
  std::map<std::pair<Index, Index>, int> hits() const { return hits_; }

 private:
  Index genes_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<Index, Index>, int> hits_;
};

class NegativePredictor final : public ExpressionPredictor {
 public:
  explicit NegativePredictor(Index genes) : genes_(genes) {}
  Index genes() const override { return genes_; }
  Vector predict(Index, const Vector&, const MaskPlan&) const override { return Vector::Constant(genes_, -3.0); }

 private:
  Index genes_;
};

}  // namespace

TEST(ImputeMatrix, EveryZeroPredictedOnceAndNonzerosUntouched) {
  const ExpressionMatrix m = small_corpus(30, 24, 3);
  CountingPredictor predictor(24);
  const Matrix out = impute_matrix(m, predictor, 4, 2);
  const auto hits = predictor.hits();
  std::size_t zeros = 0;
  for (Index c = 0; c < m.n_cells(); ++c) {
    const Vector row = m.dense_row(c);
    for (Index g = 0; g < 24; ++g) {
      if (row(g) == 0.0) {
        ++zeros;
        ASSERT_EQ(hits.count({c, g}), 1u);
        EXPECT_EQ(hits.at({c, g}), 1);
        EXPECT_EQ(out(c, g), 0.5 + static_cast<double>(g));
      } else {
        EXPECT_FALSE(hits.count({c, g}));
        EXPECT_EQ(out(c, g), row(g));
      }
    }
  }
  EXPECT_EQ(hits.size(), zeros);
}

TEST(ImputeMatrix, ClampsNegativePredictions) {
  const ExpressionMatrix m = small_corpus(10, 16, 5);
  const Matrix out = impute_matrix(m, NegativePredictor(16), 6);
  EXPECT_GE(out.minCoeff(), 0.0);
}

TEST(ImputeMatrix, GeneCountMismatchIsConfigError) {
  const ExpressionMatrix m = small_corpus(5, 16, 7);
  EXPECT_THROW(impute_matrix(m, ModelPredictor(ModelParams::init(small_config(8), 8)), 1), ConfigError);
}

TEST(EvaluateImputation, OracleIsPerfectInFiveGroups) {
  const ExpressionMatrix m = small_corpus(40, 32, 9);
  const ImputationReport r = evaluate_imputation(m, OraclePredictor(m), 10, "oracle");
  ASSERT_EQ(r.groups.size(), 5u);
  std::size_t total = 0;
  for (const auto& g : r.groups) {
    EXPECT_EQ(g.kind, GroupKind::nonzero_eval);
    EXPECT_EQ(g.mse, 0.0);
    ASSERT_TRUE(g.pearson);
    EXPECT_NEAR(*g.pearson, 1.0, 1e-12);
    total += g.count;
  }
  EXPECT_EQ(total, static_cast<std::size_t>(m.values.nonZeros()));
}

TEST(EvaluateImputation, MeanPredictorBaselineRow) {
  const ExpressionMatrix m = small_corpus(40, 32, 11);
  const MeanPredictor mean(m);
  Vector expected = Vector::Zero(32);
  for (Index c = 0; c < m.n_cells(); ++c) expected += m.dense_row(c);
  expected /= static_cast<double>(m.n_cells());
  EXPECT_LT((mean.means() - expected).cwiseAbs().maxCoeff(), 1e-12);

  const ImputationReport r = evaluate_imputation(m, mean, 12, "mean");
  ASSERT_EQ(r.groups.size(), 5u);
  for (const auto& g : r.groups) EXPECT_GT(g.mse, 0.0);

  const fs::path dir = scratch_dir("report");
  write_imputation_reports({r}, dir / "report.csv");
  std::ifstream is(dir / "report.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "predictor,group,kind,count,mse,pearson");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(line.rfind("mean,", 0), 0u);
    EXPECT_NE(line.find("nonzero-eval"), std::string::npos);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelParams model = ModelParams::init(small_config(12, 3), 13);
  const fs::path dir = scratch_dir("ckpt");
  CheckpointMetadata meta;
  meta.seed = 13;
  meta.origin = "test";
  meta.class_names = {"a", "b", "c"};
  save_checkpoint(model, dir, meta);
  const LoadedCheckpoint loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded.model.config, model.config);
  EXPECT_EQ(loaded.metadata.class_names, meta.class_names);
  EXPECT_EQ(loaded.metadata.seed, 13u);

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  Vector cell(12);
  for (Index i = 0; i < 12; ++i) cell(i) = dist(rng);
  const MaskPlan mask = mask_from_positions(cell, {1, 5});
  EXPECT_EQ(forward_mem(cell, mask, model).value(), forward_mem(cell, mask, loaded.model).value());
  EXPECT_EQ(forward_classify(cell, model).value(), forward_classify(cell, loaded.model).value());
  EXPECT_EQ(extract_cell_embedding(cell, model), extract_cell_embedding(cell, loaded.model));

  std::ifstream is(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(is);
  EXPECT_EQ(manifest.at("tensors").size(), model.parameters().size());
}

TEST(Checkpoint, SinglePrecisionPayloadsLoad) {
  const ModelParams model = ModelParams::init(small_config(8), 15);
  const fs::path dir = scratch_dir("ckpt32");
  save_checkpoint(model, dir, {}, PayloadType::f32);
  EXPECT_TRUE(fs::exists(dir / "tensors" / "gene_table.f32"));
  const LoadedCheckpoint loaded = load_checkpoint(dir);
  EXPECT_LT((loaded.model.gene_table.value() - model.gene_table.value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Checkpoint, DistinctLoadErrors) {
  const ModelParams model = ModelParams::init(small_config(8), 16);
  auto fresh = [&](const std::string& name) {
    const fs::path dir = scratch_dir(name);
    save_checkpoint(model, dir);
    return dir;
  };
  auto edit_manifest = [](const fs::path& dir, const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json manifest;
    {
      std::ifstream is(dir / "manifest.json");
      is >> manifest;
    }
    edit(manifest);
    std::ofstream(dir / "manifest.json") << manifest.dump();
  };

  const fs::path version = fresh("bad_version");
  edit_manifest(version, [](nlohmann::json& m) { m["version"] = 99; });
  EXPECT_THROW(load_checkpoint(version), CheckpointVersionError);

  const fs::path shape = fresh("bad_shape");
  edit_manifest(shape, [](nlohmann::json& m) { m["tensors"][2]["shape"] = {3, 3}; });
  EXPECT_THROW(load_checkpoint(shape), CheckpointShapeError);

  const fs::path truncated = fresh("truncated");
  fs::resize_file(truncated / "tensors" / "gene_table.f64", 10);
  EXPECT_THROW(load_checkpoint(truncated), CheckpointTruncatedError);

  const fs::path missing = fresh("missing");
  fs::remove(missing / "tensors" / "mem_head.bias.f64");
  EXPECT_THROW(load_checkpoint(missing), CheckpointTruncatedError);
}

TEST(Embeddings, CsvHasOneRowPerCell) {
  const ExpressionMatrix m = small_corpus(17, 16, 17);
  const ModelParams model = ModelParams::init(small_config(16), 18);
  const fs::path dir = scratch_dir("emb");
  export_embeddings(m, model, dir / "emb.csv");
  std::ifstream is(dir / "emb.csv");
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header, "cell_id,label,batch,e0,e1,e2,e3,e4,e5");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 17);
}

TEST(Embeddings, MatchPerCellExtraction) {
  const ExpressionMatrix m = small_corpus(6, 16, 19);
  const ModelParams model = ModelParams::init(small_config(16), 20);
  const Matrix all = cell_embeddings(m, model, 3);
  for (Index c = 0; c < m.n_cells(); ++c)
    EXPECT_EQ(Vector(all.row(c).transpose()), extract_cell_embedding(m.dense_row(c), model));
}
