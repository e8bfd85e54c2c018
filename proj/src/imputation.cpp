#include "schyena/imputation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "schyena/parallel.hpp"

namespace schyena {

namespace {

int resolve_threads(int threads) { return threads > 0 ? threads : worker_count(); }

void require_genes(const ExpressionMatrix& m, const ExpressionPredictor& predictor) {
  if (m.n_genes() != predictor.genes())
    throw ConfigError("predictor expects " + std::to_string(predictor.genes()) + " genes but the matrix has " +
                      std::to_string(m.n_genes()));
}

// Runs one masked prediction per cell that has entries in the group.
// fn(cell, mask, prediction) is called from worker threads.
template <typename Sink>
void predict_group(const ExpressionMatrix& m, const ExpressionPredictor& predictor,
                   const std::vector<MatrixEntry>& group, int threads, Sink&& sink) {
  const auto by_cell = entries_by_cell(group);
  std::vector<std::pair<Index, std::vector<Index>>> jobs(by_cell.begin(), by_cell.end());
  std::sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  parallel_for(
      static_cast<Index>(jobs.size()),
      [&](Index j) {
        NoGradGuard no_grad;
        const Index cell = jobs[j].first;
        const Vector expressions = m.dense_row(cell);
        const MaskPlan mask = mask_from_positions(expressions, jobs[j].second);
        const Vector predicted = predictor.predict(cell, expressions, mask).cwiseMax(0.0);
        sink(static_cast<std::size_t>(j), cell, mask, expressions, predicted);
      },
      resolve_threads(threads));
}

}  // namespace

Vector ModelPredictor::predict(Index, const Vector& expressions, const MaskPlan& mask) const {
  NoGradGuard no_grad;
  return forward_mem(expressions, mask, model_).value().col(0);
}

MeanPredictor::MeanPredictor(const ExpressionMatrix& reference) : means_(Vector::Zero(reference.n_genes())) {
  if (reference.n_cells() == 0) throw EmptyCorpusError("mean predictor needs at least one cell");
  for (Index r = 0; r < reference.values.outerSize(); ++r)
    for (SparseRows::InnerIterator it(reference.values, r); it; ++it) means_(it.col()) += it.value();
  means_ /= static_cast<double>(reference.n_cells());
}

Vector MeanPredictor::predict(Index, const Vector&, const MaskPlan&) const { return means_; }

Vector OraclePredictor::predict(Index cell, const Vector&, const MaskPlan&) const { return truth_.dense_row(cell); }

Matrix impute_matrix(const ExpressionMatrix& m, const ExpressionPredictor& predictor, std::uint64_t seed,
                     int threads) {
  require_genes(m, predictor);
  Matrix out(m.n_cells(), m.n_genes());
  for (Index c = 0; c < m.n_cells(); ++c) out.row(c) = m.dense_row(c).transpose();
  std::mt19937_64 rng(seed);
  const auto groups = partition_eval_groups(m, EntryKind::zero, rng);
  for (const auto& group : groups) {
    // Each job writes only its own cell's masked slots, all of which are distinct.
    predict_group(m, predictor, group, threads,
                  [&](std::size_t, Index cell, const MaskPlan& mask, const Vector&, const Vector& predicted) {
                    for (Index pos : mask.positions) out(cell, pos) = predicted(pos);
                  });
  }
  return out;
}

double ImputationReport::mean_mse() const {
  double total = 0.0;
  for (const auto& g : groups) total += g.mse;
  return groups.empty() ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(groups.size());
}

double ImputationReport::mean_pearson() const {
  double total = 0.0;
  for (const auto& g : groups) {
    if (!g.pearson) return std::numeric_limits<double>::quiet_NaN();
    total += *g.pearson;
  }
  return groups.empty() ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(groups.size());
}

ImputationReport evaluate_imputation(const ExpressionMatrix& m, const ExpressionPredictor& predictor,
                                     std::uint64_t seed, const std::string& name, int threads) {
  require_genes(m, predictor);
  std::mt19937_64 rng(seed);
  const auto groups = partition_eval_groups(m, EntryKind::nonzero, rng);
  ImputationReport report;
  report.predictor = name;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto by_cell = entries_by_cell(groups[g]);
    std::vector<std::vector<double>> truth(by_cell.size()), guess(by_cell.size());
    predict_group(m, predictor, groups[g], threads,
                  [&](std::size_t job, Index, const MaskPlan& mask, const Vector& expressions, const Vector& predicted) {
                    for (Index pos : mask.positions) {
                      truth[job].push_back(expressions(pos));
                      guess[job].push_back(predicted(pos));
                    }
                  });
    std::vector<double> all_truth, all_guess;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      all_truth.insert(all_truth.end(), truth[j].begin(), truth[j].end());
      all_guess.insert(all_guess.end(), guess[j].begin(), guess[j].end());
    }
    ImputationGroupResult row;
    row.group = static_cast<int>(g);
    row.kind = GroupKind::nonzero_eval;
    row.count = all_truth.size();
    if (!all_truth.empty()) {
      const MsePearson score = mse_pearson(all_truth, all_guess);
      row.mse = score.mse;
      row.pearson = score.pearson;
    }
    report.groups.push_back(row);
  }
  return report;
}

void write_imputation_reports(const std::vector<ImputationReport>& reports, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << std::setprecision(10) << "predictor,group,kind,count,mse,pearson\n";
  for (const auto& r : reports)
    for (const auto& g : r.groups) {
      os << r.predictor << ',' << g.group << ',' << (g.kind == GroupKind::nonzero_eval ? "nonzero-eval" : "zero-impute")
         << ',' << g.count << ',' << g.mse << ',';
      if (g.pearson) os << *g.pearson;
      else os << "nan";
      os << '\n';
    }
}

Matrix cell_embeddings(const ExpressionMatrix& m, const ModelParams& model, int threads) {
  if (m.n_genes() != model.config.genes)
    throw ConfigError("model expects " + std::to_string(model.config.genes) + " genes but the matrix has " +
                      std::to_string(m.n_genes()));
  Matrix out(m.n_cells(), model.config.width);
  parallel_for(
      m.n_cells(), [&](Index c) { out.row(c) = extract_cell_embedding(m.dense_row(c), model).transpose(); },
      resolve_threads(threads));
  return out;
}

void export_embeddings(const ExpressionMatrix& m, const ModelParams& model, const std::filesystem::path& path,
                       int threads) {
  const Matrix embeddings = cell_embeddings(m, model, threads);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << std::setprecision(17) << "cell_id,label,batch";
  for (Index d = 0; d < embeddings.cols(); ++d) os << ",e" << d;
  os << '\n';
  for (Index c = 0; c < m.n_cells(); ++c) {
    os << m.cell_ids[c] << ',' << (m.labels ? m.class_names[(*m.labels)[c]] : std::string()) << ','
       << (m.batches ? (*m.batches)[c] : std::string());
    for (Index d = 0; d < embeddings.cols(); ++d) os << ',' << embeddings(c, d);
    os << '\n';
  }
}

}  // namespace schyena
