#include "schyena/config_json.hpp"

#include <set>

namespace schyena {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError(std::string("unknown key '") + item.key() + "' in " + what + " config");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"genes", c.genes},       {"width", c.width},
       {"blocks", c.blocks},     {"order", c.order},
       {"filter_hidden", c.filter_hidden}, {"frequencies", c.frequencies}};
  j["num_classes"] = c.num_classes ? nlohmann::json(*c.num_classes) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  reject_unknown(j, {"genes", "width", "blocks", "order", "filter_hidden", "frequencies", "num_classes"}, "model");
  read(j, "genes", c.genes);
  read(j, "width", c.width);
  read(j, "blocks", c.blocks);
  read(j, "order", c.order);
  read(j, "filter_hidden", c.filter_hidden);
  read(j, "frequencies", c.frequencies);
  if (j.contains("num_classes")) {
    if (j.at("num_classes").is_null()) c.num_classes.reset();
    else c.num_classes = j.at("num_classes").get<Index>();
  }
}

std::string task_name(Task task) {
  switch (task) {
    case Task::pretrain: return "pretrain";
    case Task::classify: return "classify";
    case Task::impute: return "impute";
  }
  return "pretrain";
}

Task parse_task(const std::string& name) {
  if (name == "pretrain") return Task::pretrain;
  if (name == "classify") return Task::classify;
  if (name == "impute") return Task::impute;
  throw ConfigError("unknown task '" + name + "'");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"task", task_name(c.task)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"validation_fraction", c.validation_fraction},
       {"mask_min", c.mask_min},
       {"mask_max", c.mask_max},
       {"seed", c.seed},
       {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"task", "epochs", "batch_size", "lr", "weight_decay", "validation_fraction", "mask_min", "mask_max",
                  "seed", "threads"},
                 "train");
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  read(j, "validation_fraction", c.validation_fraction);
  read(j, "mask_min", c.mask_min);
  read(j, "mask_max", c.mask_max);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"n_cells", s.n_cells},
       {"n_genes", s.n_genes},
       {"n_types", s.n_types},
       {"program_genes", s.program_genes},
       {"baseline_mean", s.baseline_mean},
       {"boost", s.boost},
       {"dropout", s.dropout},
       {"dispersion", s.dispersion},
       {"n_batches", s.n_batches},
       {"batch_shift", s.batch_shift},
       {"batch_gene_fraction", s.batch_gene_fraction},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  reject_unknown(j,
                 {"n_cells", "n_genes", "n_types", "program_genes", "baseline_mean", "boost", "dropout", "dispersion",
                  "n_batches", "batch_shift", "batch_gene_fraction", "seed"},
                 "synthetic");
  read(j, "n_cells", s.n_cells);
  read(j, "n_genes", s.n_genes);
  read(j, "n_types", s.n_types);
  read(j, "program_genes", s.program_genes);
  read(j, "baseline_mean", s.baseline_mean);
  read(j, "boost", s.boost);
  read(j, "dropout", s.dropout);
  read(j, "dispersion", s.dispersion);
  read(j, "n_batches", s.n_batches);
  read(j, "batch_shift", s.batch_shift);
  read(j, "batch_gene_fraction", s.batch_gene_fraction);
  read(j, "seed", s.seed);
}

}  // namespace schyena
