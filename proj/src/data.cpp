#include "schyena/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace schyena {

namespace {

using Triplet = Eigen::Triplet<double>;

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& text, std::size_t line) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("not a number: '" + t + "'", line);
  return value;
}

long long parse_integer(const std::string& text, std::size_t line) {
  const std::string t = trim(text);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("not an integer: '" + t + "'", line);
  return value;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << std::setprecision(17);
  return os;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<std::string> default_ids(const std::string& prefix, Index count) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

std::filesystem::path sidecar(const std::filesystem::path& path, const std::string& suffix) {
  std::filesystem::path out = path;
  out.replace_extension(suffix);
  return out;
}

// Assigns class indices by sorted label name.
void set_string_labels(ExpressionMatrix& m, const std::vector<std::string>& names) {
  std::set<std::string> unique(names.begin(), names.end());
  m.class_names.assign(unique.begin(), unique.end());
  std::vector<int> labels;
  labels.reserve(names.size());
  for (const auto& n : names)
    labels.push_back(static_cast<int>(std::lower_bound(m.class_names.begin(), m.class_names.end(), n) -
                                      m.class_names.begin()));
  m.labels = std::move(labels);
}

}  // namespace

Vector ExpressionMatrix::dense_row(Index cell) const {
  if (cell < 0 || cell >= n_cells()) throw IndexError("dense_row: cell outside matrix", cell);
  Vector row = Vector::Zero(n_genes());
  for (SparseRows::InnerIterator it(values, cell); it; ++it) row(it.col()) = it.value();
  return row;
}

void ExpressionMatrix::validate() const {
  if (static_cast<Index>(gene_ids.size()) != n_genes())
    throw DimensionError("gene id count " + std::to_string(gene_ids.size()) + " does not match " +
                         std::to_string(n_genes()) + " genes");
  if (static_cast<Index>(cell_ids.size()) != n_cells())
    throw DimensionError("cell id count does not match cell count");
  std::unordered_set<std::string> seen;
  for (const auto& g : gene_ids)
    if (!seen.insert(g).second) throw ContractError("duplicate gene id '" + g + "'");
  if (labels && static_cast<Index>(labels->size()) != n_cells())
    throw DimensionError("label count does not match cell count");
  if (labels)
    for (int l : *labels)
      if (l < 0 || l >= static_cast<int>(class_names.size())) throw IndexError("label outside class list", l);
  if (batches && static_cast<Index>(batches->size()) != n_cells())
    throw DimensionError("batch count does not match cell count");
  if (!normalized) {
    for (Index r = 0; r < values.outerSize(); ++r)
      for (SparseRows::InnerIterator it(values, r); it; ++it)
        if (it.value() < 0.0 || it.value() != std::floor(it.value()))
          throw ContractError("raw counts must be non-negative integers (cell " + std::to_string(r) + ", gene " +
                              std::to_string(it.col()) + ")");
  }
}

ExpressionMatrix ExpressionMatrix::select_cells(std::span<const Index> cells) const {
  ExpressionMatrix out;
  out.gene_ids = gene_ids;
  out.class_names = class_names;
  out.normalized = normalized;
  out.split = split;
  std::vector<Triplet> triplets;
  std::vector<int> new_labels;
  std::vector<std::string> new_batches;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Index c = cells[i];
    if (c < 0 || c >= n_cells()) throw IndexError("select_cells: cell outside matrix", c);
    for (SparseRows::InnerIterator it(values, c); it; ++it)
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
    out.cell_ids.push_back(cell_ids[c]);
    if (labels) new_labels.push_back((*labels)[c]);
    if (batches) new_batches.push_back((*batches)[c]);
  }
  out.values.resize(static_cast<Index>(cells.size()), n_genes());
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  if (labels) out.labels = std::move(new_labels);
  if (batches) out.batches = std::move(new_batches);
  return out;
}

ExpressionMatrix preprocess(const ExpressionMatrix& raw, double min_total, double target_total) {
  std::vector<Index> kept;
  for (Index c = 0; c < raw.n_cells(); ++c)
    if (raw.values.row(c).sum() >= min_total) kept.push_back(c);
  if (kept.empty())
    throw EmptyCorpusError("no cell reaches a total count of " + std::to_string(min_total) + " (" +
                           std::to_string(raw.n_cells()) + " cells examined)");
  ExpressionMatrix out = raw.select_cells(kept);
  for (Index c = 0; c < out.n_cells(); ++c) {
    const double total = out.values.row(c).sum();
    for (SparseRows::InnerIterator it(out.values, c); it; ++it)
      it.valueRef() = std::log1p(it.value() * target_total / total);
  }
  out.normalized = true;
  return out;
}

std::vector<std::vector<MatrixEntry>> partition_eval_groups(const ExpressionMatrix& m, EntryKind kind,
                                                            std::mt19937_64& rng, std::optional<int> groups) {
  const int count = groups.value_or(kind == EntryKind::nonzero ? kNonzeroEvalGroups : kZeroImputeGroups);
  if (count < 1) throw ContractError("partition_eval_groups: group count must be positive");
  std::vector<MatrixEntry> entries;
  for (Index c = 0; c < m.n_cells(); ++c) {
    const Vector row = m.dense_row(c);
    for (Index g = 0; g < row.size(); ++g)
      if ((row(g) != 0.0) == (kind == EntryKind::nonzero)) entries.push_back({c, g});
  }
  std::shuffle(entries.begin(), entries.end(), rng);
  std::vector<std::vector<MatrixEntry>> out(static_cast<std::size_t>(count));
  const std::size_t base = entries.size() / count;
  const std::size_t extra = entries.size() % count;
  std::size_t at = 0;
  for (std::size_t g = 0; g < out.size(); ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    out[g].assign(entries.begin() + static_cast<std::ptrdiff_t>(at),
                  entries.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
  }
  return out;
}

std::unordered_map<Index, std::vector<Index>> entries_by_cell(const std::vector<MatrixEntry>& group) {
  std::unordered_map<Index, std::vector<Index>> out;
  for (const MatrixEntry& e : group) out[e.cell].push_back(e.gene);
  return out;
}

void SyntheticSpec::validate() const {
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (n_cells < 1 || n_genes < 1 || n_types < 1 || n_batches < 1) throw ConfigError("synthetic: sizes must be positive");
  if (program_genes < 0 || program_genes > n_genes) throw ConfigError("synthetic: program_genes outside [0, n_genes]");
  if (!probability(dropout) || !probability(batch_gene_fraction))
    throw ConfigError("synthetic: probabilities must lie in [0, 1]");
  if (!(baseline_mean > 0.0) || !(boost > 0.0) || !(dispersion > 0.0) || !(batch_shift > 0.0))
    throw ConfigError("synthetic: means, boost, dispersion and shift must be positive");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus corpus;

  // Programs are consecutive runs of a random gene permutation, disjoint
  // while they fit and wrapping around otherwise.
  std::vector<Index> order(static_cast<std::size_t>(spec.n_genes));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  corpus.programs.resize(static_cast<std::size_t>(spec.n_types));
  for (int t = 0; t < spec.n_types; ++t)
    for (Index k = 0; k < spec.program_genes; ++k)
      corpus.programs[t].push_back(order[static_cast<std::size_t>((t * spec.program_genes + k) % spec.n_genes)]);

  std::vector<std::vector<double>> batch_factor(static_cast<std::size_t>(spec.n_batches),
                                                std::vector<double>(static_cast<std::size_t>(spec.n_genes), 1.0));
  if (spec.n_batches > 1) {
    std::bernoulli_distribution pick(spec.batch_gene_fraction);
    for (int b = 1; b < spec.n_batches; ++b)
      for (Index g = 0; g < spec.n_genes; ++g)
        if (pick(rng)) batch_factor[b][g] = spec.batch_shift;
  }

  std::uniform_int_distribution<int> type_dist(0, spec.n_types - 1);
  std::uniform_int_distribution<int> batch_dist(0, spec.n_batches - 1);
  std::bernoulli_distribution drop(spec.dropout);
  std::vector<Triplet> triplets;
  std::vector<std::string> labels, batches;
  for (Index c = 0; c < spec.n_cells; ++c) {
    const int type = type_dist(rng);
    const int batch = batch_dist(rng);
    std::vector<double> mean(static_cast<std::size_t>(spec.n_genes), spec.baseline_mean);
    for (Index g : corpus.programs[type]) mean[g] = spec.baseline_mean * spec.boost;
    for (Index g = 0; g < spec.n_genes; ++g) {
      const double mu = mean[g] * batch_factor[batch][g];
      // Gamma-Poisson mixture with size r has mean mu and variance mu + mu²/r.
      std::gamma_distribution<double> rate(spec.dispersion, mu / spec.dispersion);
      std::poisson_distribution<long long> count(rate(rng));
      const long long k = count(rng);
      const bool dropped = drop(rng);
      if (k > 0 && !dropped) triplets.emplace_back(static_cast<int>(c), static_cast<int>(g), static_cast<double>(k));
    }
    labels.push_back("type" + std::to_string(type));
    batches.push_back("batch" + std::to_string(batch));
  }
  ExpressionMatrix& m = corpus.matrix;
  m.values.resize(spec.n_cells, spec.n_genes);
  m.values.setFromTriplets(triplets.begin(), triplets.end());
  m.gene_ids = default_ids("gene", spec.n_genes);
  m.cell_ids = default_ids("cell", spec.n_cells);
  // Class index equals type index because "typeN" sorts in order for N < 10.
  m.class_names.clear();
  for (int t = 0; t < spec.n_types; ++t) m.class_names.push_back("type" + std::to_string(t));
  std::vector<int> label_index;
  for (const auto& l : labels) label_index.push_back(std::stoi(l.substr(4)));
  m.labels = std::move(label_index);
  m.batches = std::move(batches);
  return corpus;
}

MatrixFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".mtx") return MatrixFormat::mtx;
  if (ext == ".csv") return MatrixFormat::csv;
  throw ConfigError("cannot infer matrix format from '" + path.string() + "' (expected .mtx or .csv)");
}

namespace {

ExpressionMatrix load_mtx(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream is = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("empty file", 1);
  ++line_no;
  std::istringstream header(line);
  std::string banner, object, layout, field, symmetry;
  header >> banner >> object >> layout >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix" || layout != "coordinate")
    throw ParseError("expected '%%MatrixMarket matrix coordinate' header", line_no);
  if (field != "integer" && field != "real") throw ParseError("unsupported field type '" + field + "'", line_no);
  if (symmetry != "general") throw ParseError("only general symmetry is supported", line_no);

  long long rows = -1, cols = -1, nnz = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '%') continue;
    std::istringstream size(line);
    if (!(size >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
      throw ParseError("malformed size line", line_no);
    break;
  }
  if (rows < 0) throw ParseError("missing size line", line_no);

  const Index n_cells = options.genes_by_cells ? cols : rows;
  const Index n_genes = options.genes_by_cells ? rows : cols;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  long long read = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    std::string a, b, v;
    if (!(entry >> a >> b >> v)) throw ParseError("expected 'row col value'", line_no);
    const long long r = parse_integer(a, line_no);
    const long long c = parse_integer(b, line_no);
    const double value = parse_number(v, line_no);
    if (r < 1 || r > rows || c < 1 || c > cols) throw ParseError("coordinate outside declared size", line_no);
    const Index cell = (options.genes_by_cells ? c : r) - 1;
    const Index gene = (options.genes_by_cells ? r : c) - 1;
    triplets.emplace_back(static_cast<int>(cell), static_cast<int>(gene), value);
    ++read;
  }
  if (read != nnz)
    throw ParseError("declared " + std::to_string(nnz) + " entries but found " + std::to_string(read), line_no);

  ExpressionMatrix m;
  m.values.resize(n_cells, n_genes);
  m.values.setFromTriplets(triplets.begin(), triplets.end());
  m.normalized = field == "real";
  const auto genes_path = sidecar(path, ".genes.txt");
  const auto cells_path = sidecar(path, ".cells.txt");
  m.gene_ids = std::filesystem::exists(genes_path) ? read_id_list(genes_path) : default_ids("gene", n_genes);
  m.cell_ids = std::filesystem::exists(cells_path) ? read_id_list(cells_path) : default_ids("cell", n_cells);
  const auto labels_path = sidecar(path, ".labels.csv");
  if (std::filesystem::exists(labels_path)) attach_labels(m, labels_path);
  return m;
}

ExpressionMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty file", 1);
  const std::vector<std::string> header = split_line(line, ',');
  int cell_col = -1, label_col = -1, batch_col = -1;
  std::vector<int> gene_cols;
  std::vector<std::string> gene_ids;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name == "cell_id") cell_col = static_cast<int>(i);
    else if (name == "label") label_col = static_cast<int>(i);
    else if (name == "batch") batch_col = static_cast<int>(i);
    else {
      gene_cols.push_back(static_cast<int>(i));
      gene_ids.push_back(name);
    }
  }
  std::vector<Triplet> triplets;
  std::vector<std::string> cell_ids, labels, batches;
  bool integral = true;
  std::size_t line_no = 1;
  Index row = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_line(line, ',');
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    for (std::size_t g = 0; g < gene_cols.size(); ++g) {
      const double v = parse_number(fields[gene_cols[g]], line_no);
      if (v != 0.0) triplets.emplace_back(static_cast<int>(row), static_cast<int>(g), v);
      integral = integral && v == std::floor(v) && v >= 0.0;
    }
    cell_ids.push_back(cell_col >= 0 ? trim(fields[cell_col]) : "cell" + std::to_string(row));
    if (label_col >= 0) labels.push_back(trim(fields[label_col]));
    if (batch_col >= 0) batches.push_back(trim(fields[batch_col]));
    ++row;
  }
  ExpressionMatrix m;
  m.values.resize(row, static_cast<Index>(gene_ids.size()));
  m.values.setFromTriplets(triplets.begin(), triplets.end());
  m.gene_ids = std::move(gene_ids);
  m.cell_ids = std::move(cell_ids);
  m.normalized = !integral;
  if (label_col >= 0) set_string_labels(m, labels);
  if (batch_col >= 0) m.batches = std::move(batches);
  return m;
}

}  // namespace

ExpressionMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format, const LoadOptions& options) {
  ExpressionMatrix m = format == MatrixFormat::mtx ? load_mtx(path, options) : load_csv(path);
  m.validate();
  return m;
}

void save_matrix(const ExpressionMatrix& m, const std::filesystem::path& path, MatrixFormat format) {
  std::ofstream os = open_output(path);
  if (format == MatrixFormat::mtx) {
    os << "%%MatrixMarket matrix coordinate " << (m.normalized ? "real" : "integer") << " general\n";
    os << "% cells x genes\n";
    os << m.n_cells() << ' ' << m.n_genes() << ' ' << m.values.nonZeros() << '\n';
    for (Index r = 0; r < m.values.outerSize(); ++r)
      for (SparseRows::InnerIterator it(m.values, r); it; ++it)
        os << r + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    std::ofstream genes = open_output(sidecar(path, ".genes.txt"));
    for (const auto& g : m.gene_ids) genes << g << '\n';
    std::ofstream cells = open_output(sidecar(path, ".cells.txt"));
    for (const auto& c : m.cell_ids) cells << c << '\n';
    if (m.labels || m.batches) save_labels(m, sidecar(path, ".labels.csv"));
    return;
  }
  os << "cell_id";
  for (const auto& g : m.gene_ids) os << ',' << g;
  if (m.labels) os << ",label";
  if (m.batches) os << ",batch";
  os << '\n';
  for (Index c = 0; c < m.n_cells(); ++c) {
    const Vector row = m.dense_row(c);
    os << m.cell_ids[c];
    for (Index g = 0; g < row.size(); ++g) os << ',' << row(g);
    if (m.labels) os << ',' << m.class_names[(*m.labels)[c]];
    if (m.batches) os << ',' << (*m.batches)[c];
    os << '\n';
  }
}

void attach_labels(ExpressionMatrix& m, const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty labels file", 1);
  const auto header = split_line(line, ',');
  if (header.size() < 2 || trim(header[0]) != "cell_id" || trim(header[1]) != "label")
    throw ParseError("labels header must start with cell_id,label", 1);
  const bool has_batch = header.size() >= 3 && trim(header[2]) == "batch";
  std::unordered_map<std::string, std::pair<std::string, std::string>> by_cell;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != header.size()) throw ParseError("wrong field count in labels file", line_no);
    by_cell[trim(fields[0])] = {trim(fields[1]), has_batch ? trim(fields[2]) : std::string()};
  }
  std::vector<std::string> labels, batches;
  for (const auto& id : m.cell_ids) {
    const auto it = by_cell.find(id);
    if (it == by_cell.end()) throw ParseError("no label for cell '" + id + "'", line_no);
    labels.push_back(it->second.first);
    batches.push_back(it->second.second);
  }
  set_string_labels(m, labels);
  if (has_batch) m.batches = std::move(batches);
}

void save_labels(const ExpressionMatrix& m, const std::filesystem::path& path) {
  std::ofstream os = open_output(path);
  os << "cell_id,label" << (m.batches ? ",batch" : "") << '\n';
  for (Index c = 0; c < m.n_cells(); ++c) {
    os << m.cell_ids[c] << ',' << (m.labels ? m.class_names[(*m.labels)[c]] : std::string());
    if (m.batches) os << ',' << (*m.batches)[c];
    os << '\n';
  }
}

void remap_labels(ExpressionMatrix& m, std::vector<std::string>& class_names) {
  if (!m.labels) {
    m.class_names = class_names;
    return;
  }
  std::vector<int> mapped;
  for (int l : *m.labels) {
    const std::string& name = m.class_names[l];
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) {
      class_names.push_back(name);
      it = class_names.end() - 1;
    }
    mapped.push_back(static_cast<int>(it - class_names.begin()));
  }
  m.labels = std::move(mapped);
  m.class_names = class_names;
}

std::unordered_map<std::string, std::string> load_gene_mapping(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::unordered_map<std::string, std::string> mapping;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream fields(t);
    std::string source, stable, extra;
    if (!(fields >> source >> stable) || (fields >> extra)) throw ParseError("expected two columns", line_no);
    mapping[source] = stable;
  }
  return mapping;
}

GeneMappingResult apply_gene_mapping(const ExpressionMatrix& m,
                                     const std::unordered_map<std::string, std::string>& mapping) {
  GeneMappingResult result;
  std::vector<Index> target(static_cast<std::size_t>(m.n_genes()), -1);
  std::unordered_map<std::string, Index> stable_index;
  std::vector<std::string> stable_ids;
  for (Index g = 0; g < m.n_genes(); ++g) {
    const auto it = mapping.find(m.gene_ids[g]);
    if (it == mapping.end()) {
      result.rejected.push_back(m.gene_ids[g]);
      continue;
    }
    auto [pos, inserted] = stable_index.emplace(it->second, static_cast<Index>(stable_ids.size()));
    if (inserted) stable_ids.push_back(it->second);
    target[g] = pos->second;
  }
  std::vector<Triplet> triplets;
  for (Index r = 0; r < m.values.outerSize(); ++r)
    for (SparseRows::InnerIterator it(m.values, r); it; ++it)
      if (target[it.col()] >= 0) triplets.emplace_back(static_cast<int>(r), static_cast<int>(target[it.col()]), it.value());
  ExpressionMatrix& out = result.matrix;
  out = m;
  out.values.resize(m.n_cells(), static_cast<Index>(stable_ids.size()));
  // setFromTriplets sums duplicates, merging genes that share a stable id.
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  out.gene_ids = std::move(stable_ids);
  return result;
}

ExpressionMatrix align_genes(const ExpressionMatrix& m, const std::vector<std::string>& vocabulary) {
  std::unordered_map<std::string, Index> position;
  for (std::size_t i = 0; i < vocabulary.size(); ++i)
    if (!position.emplace(vocabulary[i], static_cast<Index>(i)).second)
      throw ContractError("duplicate gene id '" + vocabulary[i] + "' in vocabulary");
  std::vector<Triplet> triplets;
  for (Index r = 0; r < m.values.outerSize(); ++r)
    for (SparseRows::InnerIterator it(m.values, r); it; ++it) {
      const auto found = position.find(m.gene_ids[it.col()]);
      if (found != position.end()) triplets.emplace_back(static_cast<int>(r), static_cast<int>(found->second), it.value());
    }
  ExpressionMatrix out = m;
  out.values.resize(m.n_cells(), static_cast<Index>(vocabulary.size()));
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  out.gene_ids = vocabulary;
  return out;
}

std::pair<ExpressionMatrix, ExpressionMatrix> split_train_test(const ExpressionMatrix& m, double test_fraction,
                                                               std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ContractError("test fraction must lie in [0, 1]");
  std::vector<Index> order(static_cast<std::size_t>(m.n_cells()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(m.n_cells())));
  std::vector<Index> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  std::pair<ExpressionMatrix, ExpressionMatrix> out{m.select_cells(train), m.select_cells(test)};
  out.first.split = SplitTag::train;
  out.second.split = SplitTag::test;
  return out;
}

}  // namespace schyena
