#pragma once

// Count-matrix ingestion, preprocessing, the synthetic corpus generator,
// and the random partitions used for evaluation.

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "schyena/mask.hpp"
#include "schyena/tensor.hpp"

namespace schyena {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Which side of a partition a corpus came from. Fine-tuning refuses
// corpora tagged test.
enum class SplitTag { whole, train, validation, test };

struct ExpressionMatrix {
  SparseRows values;  // cells × genes
  std::vector<std::string> gene_ids;
  std::vector<std::string> cell_ids;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> class_names;
  std::optional<std::vector<std::string>> batches;
  bool normalized = false;
  SplitTag split = SplitTag::whole;

  Index n_cells() const { return values.rows(); }
  Index n_genes() const { return values.cols(); }
  Vector dense_row(Index cell) const;

  // Throws on duplicate gene ids, inconsistent sidecar lengths, or (when
  // not normalized) negative or non-integer counts.
  void validate() const;

  ExpressionMatrix select_cells(std::span<const Index> cells) const;
};

// Removes cells whose raw total is below min_total, scales each remaining
// cell to target_total, then applies log(x+1).
ExpressionMatrix preprocess(const ExpressionMatrix& raw, double min_total = 200.0, double target_total = 10000.0);

struct MatrixEntry {
  Index cell = 0;
  Index gene = 0;
  bool operator==(const MatrixEntry&) const = default;
};

enum class EntryKind { nonzero, zero };

inline constexpr int kNonzeroEvalGroups = 5;
inline constexpr int kZeroImputeGroups = 10;

// Random near-equal disjoint partition of all nonzero (5 groups) or all zero
// (10 groups) entries. Earlier groups take the remainder.
std::vector<std::vector<MatrixEntry>> partition_eval_groups(const ExpressionMatrix& m, EntryKind kind,
                                                            std::mt19937_64& rng, std::optional<int> groups = {});

// Groups the entries of one partition group by cell.
std::unordered_map<Index, std::vector<Index>> entries_by_cell(const std::vector<MatrixEntry>& group);

struct SyntheticSpec {
  Index n_cells = 400;
  Index n_genes = 256;
  int n_types = 4;
  Index program_genes = 20;  // type-specific genes per type
  double baseline_mean = 1.0;
  double boost = 20.0;
  double dropout = 0.3;
  double dispersion = 2.0;  // negative-binomial size parameter
  int n_batches = 1;
  double batch_shift = 1.0;  // multiplicative shift on each batch's gene subset
  double batch_gene_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCorpus {
  ExpressionMatrix matrix;
  std::vector<std::vector<Index>> programs;  // per type, its boosted genes
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

enum class MatrixFormat { mtx, csv };

struct LoadOptions {
  // Matrix Market files from 10x-style pipelines are genes × cells.
  bool genes_by_cells = false;
};

// Reads a count matrix. For `x.mtx`, gene and cell ids are taken from
// `x.genes.txt` / `x.cells.txt` and labels from `x.labels.csv` when present.
ExpressionMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format, const LoadOptions& options = {});
void save_matrix(const ExpressionMatrix& m, const std::filesystem::path& path, MatrixFormat format);
MatrixFormat format_from_path(const std::filesystem::path& path);

// Sidecar CSV with header cell_id,label[,batch].
void attach_labels(ExpressionMatrix& m, const std::filesystem::path& path);
void save_labels(const ExpressionMatrix& m, const std::filesystem::path& path);

// Reorders label indices so they refer to the given class list; labels not
// in the list are appended to it.
void remap_labels(ExpressionMatrix& m, std::vector<std::string>& class_names);

struct GeneMappingResult {
  ExpressionMatrix matrix;
  std::vector<std::string> rejected;  // source ids with no mapping
};

// Two-column text (source id, stable id). '#' starts a comment.
std::unordered_map<std::string, std::string> load_gene_mapping(const std::filesystem::path& path);

// Renames genes to stable ids, dropping unmapped genes and summing genes
// that map to the same stable id.
GeneMappingResult apply_gene_mapping(const ExpressionMatrix& m,
                                     const std::unordered_map<std::string, std::string>& mapping);

// Reorders columns to the given vocabulary; absent genes become zero columns.
ExpressionMatrix align_genes(const ExpressionMatrix& m, const std::vector<std::string>& vocabulary);

// Seeded uniform partition of cells. Test size is round(fraction·n).
std::pair<ExpressionMatrix, ExpressionMatrix> split_train_test(const ExpressionMatrix& m, double test_fraction,
                                                               std::uint64_t seed);

}  // namespace schyena
