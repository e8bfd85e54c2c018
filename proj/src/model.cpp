#include "schyena/model.hpp"

#include <random>

namespace schyena {

namespace {

Tensor normal_leaf(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

}  // namespace

void ModelConfig::validate() const {
  if (genes < 1) throw ConfigError("model config: genes (L) must be >= 1");
  if (width < 2) throw ConfigError("model config: width (D) must be >= 2");
  if (blocks < 1) throw ConfigError("model config: blocks (M) must be >= 1");
  if (order < 1) throw ConfigError("model config: order (N) must be >= 1");
  if (filter_hidden < 1 || frequencies < 1) throw ConfigError("model config: filter sizes must be positive");
  if (num_classes && *num_classes < 1) throw ConfigError("model config: num_classes must be positive");
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  const Index d = config.width;
  p.adaptor_weight = normal_leaf(1, d, 0.1, rng);
  p.adaptor_bias = Tensor::zeros(1, d, true);
  p.gene_table = normal_leaf(config.genes, d, 0.5, rng);
  p.mask_embedding = normal_leaf(1, d, 0.5, rng);
  p.cls_embedding = normal_leaf(1, d, 0.5, rng);
  for (int m = 0; m < config.blocks; ++m)
    p.blocks.push_back(
        HyenaBlock::init(d, config.order, config.filter_hidden, config.frequencies, config.genes, rng));
  p.mem_head = Linear::init(d, 1, rng);
  if (config.num_classes) p.cls_head = Linear::init(d, *config.num_classes, rng);
  return p;
}

void ModelParams::reset_classifier(Index num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  std::mt19937_64 rng(seed);
  config.num_classes = num_classes;
  cls_head = Linear::init(config.width, num_classes, rng);
}

void ModelParams::visit(const ParamVisitor& visitor) {
  visitor("adaptor.weight", adaptor_weight, false);
  visitor("adaptor.bias", adaptor_bias, false);
  visitor("gene_table", gene_table, false);
  visitor("mask_embedding", mask_embedding, false);
  visitor("cls_embedding", cls_embedding, false);
  for (std::size_t m = 0; m < blocks.size(); ++m) visit_parameters(blocks[m], "blocks." + std::to_string(m), visitor);
  visit_parameters(mem_head, "mem_head", visitor);
  if (cls_head) visit_parameters(*cls_head, "cls_head", visitor);
}

std::vector<NamedParameter> ModelParams::parameters() const {
  std::vector<NamedParameter> out;
  // A shallow copy shares every tensor node with this model.
  ModelParams view = *this;
  view.visit(
      [&out](const std::string& name, Tensor& t, bool decay) { out.push_back({name, t, decay}); });
  return out;
}

Index ModelParams::parameter_count() const {
  Index total = 0;
  for (const auto& p : parameters()) total += p.tensor.size();
  return total;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.visit([](const std::string&, Tensor& t, bool) { t = t.detached(true); });
  return copy;
}

Tensor embed(const Vector& expressions, const MaskPlan& mask, bool include_cls, const ModelParams& params) {
  const Index genes = params.config.genes;
  if (expressions.size() != genes)
    throw DimensionError("embed: cell has " + std::to_string(expressions.size()) + " genes, model expects " +
                         std::to_string(genes));
  // Row i selects C_i·w + b, or the mask embedding when masked.
  Matrix selector(genes, 3);
  selector.col(0) = expressions;
  selector.col(1).setOnes();
  selector.col(2).setZero();
  for (Index pos : mask.positions) {
    if (pos < 0 || pos >= genes) throw IndexError("embed: mask position outside the gene range", pos);
    selector.row(pos) << 0.0, 0.0, 1.0;
  }
  const Tensor rows[] = {params.adaptor_weight, params.adaptor_bias, params.mask_embedding};
  const Tensor values = matmul(Tensor(std::move(selector)), concat_rows(rows));
  const Tensor embedded = add(values, params.gene_table);
  if (!include_cls) return embedded;
  const Tensor with_cls[] = {params.cls_embedding, embedded};
  return concat_rows(with_cls);
}

Tensor encode(const Tensor& embeddings, const ModelParams& params) {
  Tensor h = embeddings;
  for (const HyenaBlock& block : params.blocks) h = block_forward(h, block, ConvMode::bidirectional);
  return h;
}

Tensor forward_mem(const Vector& expressions, const MaskPlan& mask, const ModelParams& params) {
  return params.mem_head(encode(embed(expressions, mask, false, params), params));
}

Tensor forward_classify(const Vector& expressions, const ModelParams& params) {
  if (!params.cls_head) throw ConfigError("forward_classify: model has no classification head");
  const Tensor hidden = encode(embed(expressions, MaskPlan{}, true, params), params);
  return (*params.cls_head)(slice_rows(hidden, 0, 1));
}

Vector extract_cell_embedding(const Vector& expressions, const ModelParams& params) {
  NoGradGuard no_grad;
  const Tensor hidden = encode(embed(expressions, MaskPlan{}, false, params), params);
  return mean_rows(hidden).value().row(0).transpose();
}

}  // namespace schyena
