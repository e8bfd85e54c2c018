// Command-line front end: data preparation, training, inference and the
// verification utilities.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "schyena/bench.hpp"
#include "schyena/checkpoint.hpp"
#include "schyena/config_json.hpp"
#include "schyena/gradcheck.hpp"
#include "schyena/imputation.hpp"
#include "schyena/metrics.hpp"
#include "schyena/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace schyena;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 0;
};

struct Io {
  std::string input;
  std::string checkpoint;
  bool genes_by_cells = false;
};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const CheckpointVersionError*>(&e)) return "checkpoint-version";
  if (dynamic_cast<const CheckpointShapeError*>(&e)) return "checkpoint-shape";
  if (dynamic_cast<const CheckpointTruncatedError*>(&e)) return "checkpoint-truncated";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const EmptyCorpusError*>(&e)) return "empty-corpus";
  if (dynamic_cast<const TrainingDivergedError*>(&e)) return "diverged";
  if (dynamic_cast<const NonFiniteGradientError*>(&e)) return "non-finite-gradient";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const IndexError*>(&e)) return "index";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const json::exception*>(&e)) return "config";
  return "runtime";
}

void report_error(const std::string& command, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"command", command}, {"message", message}}.dump() << '\n';
}

json load_run_config(const Common& common) {
  if (common.config_path.empty()) return json::object();
  std::ifstream is(common.config_path);
  if (!is) throw ConfigError("cannot open config " + common.config_path);
  json doc;
  try {
    is >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + common.config_path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : doc.items())
    if (item.key() != "model" && item.key() != "train" && item.key() != "synthetic")
      throw ConfigError("unknown top-level config key '" + item.key() + "' (expected model, train, synthetic)");
  // Sections a command does not read are still checked for typos.
  if (doc.contains("model")) (void)doc.at("model").get<ModelConfig>();
  if (doc.contains("train")) (void)doc.at("train").get<TrainConfig>();
  if (doc.contains("synthetic")) (void)doc.at("synthetic").get<SyntheticSpec>();
  return doc;
}

TrainConfig train_config(const json& doc, TrainConfig base, const Common& common) {
  const Task task = base.task;
  if (doc.contains("train")) doc.at("train").get_to(base);
  if (base.task != task) throw ConfigError("train.task is '" + task_name(base.task) + "' but this command runs " + task_name(task));
  if (common.seed) base.seed = *common.seed;
  if (common.threads > 0) base.threads = common.threads;
  base.validate();
  return base;
}

ExpressionMatrix load_input(const Io& io) {
  if (io.input.empty()) throw ConfigError("--input is required");
  ExpressionMatrix m = load_matrix(io.input, format_from_path(io.input), {.genes_by_cells = io.genes_by_cells});
  if (!m.normalized) {
    const Index before = m.n_cells();
    m = preprocess(m);
    std::cerr << "note: preprocessed raw counts (" << before << " cells in, " << m.n_cells() << " kept)\n";
  }
  return m;
}

LoadedCheckpoint load_model(const Io& io) {
  if (io.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(io.checkpoint);
}

// Puts the matrix columns in the checkpoint's gene order.
ExpressionMatrix conform_genes(const ExpressionMatrix& m, const std::vector<std::string>& vocabulary) {
  if (vocabulary.empty() || vocabulary == m.gene_ids) return m;
  return align_genes(m, vocabulary);
}

ExpressionMatrix conform_genes(const ExpressionMatrix& m, const LoadedCheckpoint& ckpt) {
  return conform_genes(m, ckpt.metadata.gene_ids);
}

void write_trace(const std::vector<TraceRow>& trace, const fs::path& path) {
  std::ofstream os(path);
  os << std::setprecision(10) << "step,loss,lr,p\n";
  for (const auto& r : trace) os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.mask_probability << '\n';
}

void write_json(const json& j, const fs::path& path) { std::ofstream(path) << j.dump(2) << '\n'; }

int run_synth(const Common& common, const std::string& format) {
  const json doc = load_run_config(common);
  SyntheticSpec spec;
  if (doc.contains("synthetic")) doc.at("synthetic").get_to(spec);
  if (common.seed) spec.seed = *common.seed;
  const SyntheticCorpus corpus = generate_synthetic(spec);
  fs::create_directories(common.out);
  const fs::path path = fs::path(common.out) / (format == "csv" ? "counts.csv" : "counts.mtx");
  save_matrix(corpus.matrix, path, format == "csv" ? MatrixFormat::csv : MatrixFormat::mtx);
  json programs = json::object();
  for (std::size_t t = 0; t < corpus.programs.size(); ++t) {
    json genes = json::array();
    for (Index g : corpus.programs[t]) genes.push_back(corpus.matrix.gene_ids[g]);
    programs[corpus.matrix.class_names[t]] = genes;
  }
  write_json({{"spec", spec}, {"programs", programs}}, fs::path(common.out) / "synthetic.json");
  std::cout << json{{"cells", corpus.matrix.n_cells()}, {"genes", corpus.matrix.n_genes()}, {"path", path.string()}}.dump()
            << '\n';
  return 0;
}

int run_preprocess(const Common& common, const Io& io, const std::string& mapping) {
  if (io.input.empty()) throw ConfigError("--input is required");
  ExpressionMatrix raw = load_matrix(io.input, format_from_path(io.input), {.genes_by_cells = io.genes_by_cells});
  fs::create_directories(common.out);
  std::vector<std::string> rejected;
  if (!mapping.empty()) {
    GeneMappingResult mapped = apply_gene_mapping(raw, load_gene_mapping(mapping));
    raw = std::move(mapped.matrix);
    rejected = std::move(mapped.rejected);
    std::ofstream os(fs::path(common.out) / "rejected_genes.txt");
    for (const auto& g : rejected) os << g << '\n';
  }
  const ExpressionMatrix out = preprocess(raw);
  save_matrix(out, fs::path(common.out) / "normalized.mtx", MatrixFormat::mtx);
  std::cout << json{{"cells_in", raw.n_cells()},
                    {"cells_kept", out.n_cells()},
                    {"genes", out.n_genes()},
                    {"rejected_genes", rejected.size()}}
                   .dump()
            << '\n';
  return 0;
}

int run_pretrain(const Common& common, const Io& io) {
  const json doc = load_run_config(common);
  const ExpressionMatrix corpus = load_input(io);
  const TrainConfig config = train_config(doc, TrainConfig::pretraining(), common);
  ModelParams model;
  CheckpointMetadata meta;
  if (!io.checkpoint.empty()) {
    LoadedCheckpoint ckpt = load_model(io);
    meta = ckpt.metadata;
    model = std::move(ckpt.model);
  } else {
    ModelConfig mc;
    if (doc.contains("model")) doc.at("model").get_to(mc);
    mc.genes = corpus.n_genes();
    model = ModelParams::init(mc, config.seed);
  }
  const PretrainResult result = pretrain(conform_genes(corpus, meta.gene_ids), config, model);
  fs::create_directories(common.out);
  meta.seed = config.seed;
  meta.origin = "pretrain";
  if (meta.gene_ids.empty()) meta.gene_ids = corpus.gene_ids;
  save_checkpoint(model, fs::path(common.out) / "checkpoint", meta);
  write_trace(result.trace, fs::path(common.out) / "loss.csv");
  write_json({{"train", config}, {"model", model.config}}, fs::path(common.out) / "run_config.json");
  std::cout << json{{"steps", result.trace.size()},
                    {"final_loss", result.trace.empty() ? 0.0 : result.trace.back().loss},
                    {"checkpoint", (fs::path(common.out) / "checkpoint").string()}}
                   .dump()
            << '\n';
  return 0;
}

int run_finetune(const Common& common, const Io& io, Task task) {
  const json doc = load_run_config(common);
  if (doc.contains("model")) throw ConfigError("fine-tuning takes its model shape from the checkpoint; drop the model section");
  LoadedCheckpoint ckpt = load_model(io);
  ExpressionMatrix corpus = conform_genes(load_input(io), ckpt);
  const TrainConfig config = train_config(doc, TrainConfig::finetuning(task), common);
  if (task == Task::classify) {
    if (!corpus.labels) throw ConfigError("classification fine-tuning needs labels (label column or .labels.csv sidecar)");
    // Keep the class order of a checkpoint that already has a head.
    std::vector<std::string> classes = ckpt.model.cls_head ? ckpt.metadata.class_names : std::vector<std::string>{};
    remap_labels(corpus, classes);
  }
  FinetuneResult result = finetune(corpus, config, ckpt.model);
  fs::create_directories(common.out);
  CheckpointMetadata meta = ckpt.metadata;
  meta.seed = config.seed;
  meta.origin = task == Task::classify ? "finetune-classify" : "finetune-impute";
  if (task == Task::classify) meta.class_names = corpus.class_names;
  if (meta.gene_ids.empty()) meta.gene_ids = corpus.gene_ids;
  save_checkpoint(result.best, fs::path(common.out) / "checkpoint", meta);
  write_trace(result.trace, fs::path(common.out) / "loss.csv");
  std::ofstream val(fs::path(common.out) / "validation.csv");
  val << std::setprecision(10) << "epoch," << (task == Task::classify ? "macro_f1" : "masked_mse") << '\n';
  for (std::size_t e = 0; e < result.validation_metric.size(); ++e) val << e << ',' << result.validation_metric[e] << '\n';
  std::cout << json{{"best_epoch", result.best_epoch},
                    {"validation", result.validation_metric},
                    {"warnings", result.warnings},
                    {"checkpoint", (fs::path(common.out) / "checkpoint").string()}}
                   .dump()
            << '\n';
  return 0;
}

int run_classify(const Common& common, const Io& io) {
  const LoadedCheckpoint ckpt = load_model(io);
  if (!ckpt.model.cls_head) throw ConfigError("checkpoint has no classification head; run finetune-classify first");
  ExpressionMatrix m = conform_genes(load_input(io), ckpt);
  const std::vector<int> predicted = predict_classes(m, ckpt.model, common.threads);
  const auto& names = ckpt.metadata.class_names;
  auto name_of = [&](int k) { return k < static_cast<int>(names.size()) ? names[k] : "class" + std::to_string(k); };
  fs::create_directories(common.out);
  std::ofstream os(fs::path(common.out) / "predictions.csv");
  os << "cell_id,predicted" << (m.labels ? ",label" : "") << '\n';
  for (Index c = 0; c < m.n_cells(); ++c) {
    os << m.cell_ids[c] << ',' << name_of(predicted[c]);
    if (m.labels) os << ',' << m.class_names[(*m.labels)[c]];
    os << '\n';
  }
  json summary{{"cells", m.n_cells()}};
  if (m.labels) {
    std::vector<std::string> classes = names;
    remap_labels(m, classes);
    const int n_classes = static_cast<int>(std::max(classes.size(), static_cast<std::size_t>(*ckpt.model.config.num_classes)));
    const ClassificationReport r = f1_report(*m.labels, predicted, n_classes);
    json per_class = json::array();
    for (int k = 0; k < n_classes; ++k)
      per_class.push_back({{"class", k < static_cast<int>(classes.size()) ? classes[k] : name_of(k)},
                           {"precision", r.precision[k]},
                           {"recall", r.recall[k]},
                           {"f1", r.f1[k]},
                           {"support", r.support[k]},
                           {"degenerate", static_cast<bool>(r.degenerate[k])}});
    json confusion = json::array();
    for (Index i = 0; i < r.confusion.rows(); ++i) {
      json row = json::array();
      for (Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
      confusion.push_back(row);
    }
    const json report{{"macro_f1", r.macro_f1}, {"micro_f1", r.micro_f1}, {"weighted_f1", r.weighted_f1},
                      {"accuracy", r.accuracy}, {"classes", per_class}, {"confusion", confusion}};
    write_json(report, fs::path(common.out) / "classification_report.json");
    summary["macro_f1"] = r.macro_f1;
    summary["micro_f1"] = r.micro_f1;
    summary["weighted_f1"] = r.weighted_f1;
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_impute(const Common& common, const Io& io) {
  const LoadedCheckpoint ckpt = load_model(io);
  const ExpressionMatrix m = conform_genes(load_input(io), ckpt);
  const std::uint64_t seed = common.seed.value_or(0);
  const Matrix imputed = impute_matrix(m, ModelPredictor(ckpt.model), seed, common.threads);
  ExpressionMatrix out = m;
  out.values = imputed.sparseView();
  out.normalized = true;
  fs::create_directories(common.out);
  save_matrix(out, fs::path(common.out) / "imputed.mtx", MatrixFormat::mtx);
  std::cout << json{{"cells", m.n_cells()}, {"zeros_before", m.n_cells() * m.n_genes() - m.values.nonZeros()},
                    {"zeros_after", out.n_cells() * out.n_genes() - out.values.nonZeros()}}
                   .dump()
            << '\n';
  return 0;
}

int run_eval_impute(const Common& common, const Io& io, const std::string& reference) {
  const LoadedCheckpoint ckpt = load_model(io);
  const ExpressionMatrix m = conform_genes(load_input(io), ckpt);
  const ExpressionMatrix ref = reference.empty() ? m : conform_genes(load_input({reference, "", io.genes_by_cells}), ckpt);
  const std::uint64_t seed = common.seed.value_or(0);
  const std::vector<ImputationReport> reports{
      evaluate_imputation(m, ModelPredictor(ckpt.model), seed, "model", common.threads),
      evaluate_imputation(m, MeanPredictor(ref), seed, "gene-mean", common.threads)};
  fs::create_directories(common.out);
  write_imputation_reports(reports, fs::path(common.out) / "imputation_report.csv");
  json summary = json::object();
  for (const auto& r : reports) summary[r.predictor] = {{"mse", r.mean_mse()}, {"pearson", r.mean_pearson()}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_embed(const Common& common, const Io& io) {
  const LoadedCheckpoint ckpt = load_model(io);
  const ExpressionMatrix m = conform_genes(load_input(io), ckpt);
  fs::create_directories(common.out);
  export_embeddings(m, ckpt.model, fs::path(common.out) / "embeddings.csv", common.threads);
  std::cout << json{{"cells", m.n_cells()}, {"width", ckpt.model.config.width}}.dump() << '\n';
  return 0;
}

int run_gradcheck(const Common& common, bool write_csv) {
  GradCheckOptions options;
  options.seed = common.seed.value_or(0);
  const auto entries = gradcheck_all(options);
  bool ok = true;
  std::ostringstream csv;
  csv << std::setprecision(6) << "suite,name,relative_error,passed\n";
  for (const auto& e : entries) {
    ok = ok && e.passed;
    csv << e.suite << ',' << e.name << ',' << e.error << ',' << (e.passed ? "yes" : "no") << '\n';
  }
  std::cout << csv.str();
  if (write_csv) {
    fs::create_directories(common.out);
    std::ofstream(fs::path(common.out) / "gradcheck.csv") << csv.str();
  }
  std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << '\n';
  return ok ? 0 : 1;
}

int run_bench_conv(const Common& common, const std::vector<Index>& lengths, const std::string& mode_name, int repeats,
                   bool write_csv) {
  if (mode_name != "causal" && mode_name != "bidirectional") throw ConfigError("--mode must be causal or bidirectional");
  const ConvMode mode = mode_name == "causal" ? ConvMode::causal : ConvMode::bidirectional;
  const auto timings = benchmark_conv(lengths, mode, repeats, common.seed.value_or(0));
  std::ostringstream csv;
  csv << std::setprecision(6) << "length,mode,fft_seconds,toeplitz_seconds,max_abs_difference\n";
  for (const auto& t : timings)
    csv << t.length << ',' << mode_name << ',' << t.fft_seconds << ',' << t.toeplitz_seconds << ','
        << t.max_abs_difference << '\n';
  std::cout << csv.str();
  if (write_csv) {
    fs::create_directories(common.out);
    std::ofstream(fs::path(common.out) / "bench_conv.csv") << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional Hyena models for single-cell expression data"};
  app.require_subcommand(1);

  Common common;
  Io io;
  std::string format = "mtx", mapping, reference, mode = "bidirectional";
  std::vector<Index> lengths{1024, 8192};
  int repeats = 3;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config with optional model/train/synthetic sections");
    sub->add_option("--seed", common.seed, "Seed overriding the config");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--threads", common.threads, "Worker threads (default: SCHYENA_THREADS or hardware)");
  };
  auto add_input = [&](CLI::App* sub) {
    sub->add_option("--input", io.input, "Count matrix (.mtx or .csv)");
    sub->add_flag("--genes-by-cells", io.genes_by_cells, "Matrix Market file is genes x cells");
  };
  auto add_checkpoint = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--checkpoint", io.checkpoint, "Checkpoint directory");
    if (required) opt->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled count matrix");
  add_common(synth);
  synth->add_option("--format", format, "mtx or csv")->check(CLI::IsMember({"mtx", "csv"}));

  auto* prep = app.add_subcommand("preprocess", "Filter, normalize and log-transform raw counts");
  add_common(prep);
  add_input(prep);
  prep->add_option("--mapping", mapping, "Two-column gene id mapping file");

  auto* pre = app.add_subcommand("pretrain", "Masked expression pretraining");
  add_common(pre);
  add_input(pre);
  add_checkpoint(pre, false);

  auto* ftc = app.add_subcommand("finetune-classify", "Fine-tune for cell-type classification");
  add_common(ftc);
  add_input(ftc);
  add_checkpoint(ftc, true);

  auto* fti = app.add_subcommand("finetune-impute", "Fine-tune for expression imputation");
  add_common(fti);
  add_input(fti);
  add_checkpoint(fti, true);

  auto* cls = app.add_subcommand("classify", "Predict cell types");
  add_common(cls);
  add_input(cls);
  add_checkpoint(cls, true);

  auto* imp = app.add_subcommand("impute", "Impute every zero entry");
  add_common(imp);
  add_input(imp);
  add_checkpoint(imp, true);

  auto* evi = app.add_subcommand("eval-impute", "Score masked-nonzero imputation against a gene-mean baseline");
  add_common(evi);
  add_input(evi);
  add_checkpoint(evi, true);
  evi->add_option("--reference", reference, "Matrix for the gene-mean baseline (default: --input)");

  auto* emb = app.add_subcommand("embed", "Export cell embeddings");
  add_common(emb);
  add_input(emb);
  add_checkpoint(emb, true);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  add_common(grad);

  auto* bench = app.add_subcommand("bench-conv", "Time FFT and Toeplitz convolution");
  add_common(bench);
  bench->add_option("--lengths", lengths, "Sequence lengths")->delimiter(',');
  bench->add_option("--mode", mode, "causal or bidirectional");
  bench->add_option("--repeats", repeats, "Timing repeats (best is kept)");

  std::string command = "schyena";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    std::cerr << (command == "schyena" ? app.help() : app.get_subcommand(command)->help());
    report_error(command, "usage", e.what());
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  command = chosen->get_name();
  const bool wrote_out = chosen->count("--out") > 0;
  try {
    if (chosen == synth) return run_synth(common, format);
    if (chosen == prep) return run_preprocess(common, io, mapping);
    if (chosen == pre) return run_pretrain(common, io);
    if (chosen == ftc) return run_finetune(common, io, Task::classify);
    if (chosen == fti) return run_finetune(common, io, Task::impute);
    if (chosen == cls) return run_classify(common, io);
    if (chosen == imp) return run_impute(common, io);
    if (chosen == evi) return run_eval_impute(common, io, reference);
    if (chosen == emb) return run_embed(common, io);
    if (chosen == grad) return run_gradcheck(common, wrote_out);
    if (chosen == bench) return run_bench_conv(common, lengths, mode, repeats, wrote_out);
  } catch (const std::exception& e) {
    report_error(command, error_kind(e), e.what());
    return 1;
  }
  return 1;
}
