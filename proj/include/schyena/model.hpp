#pragma once

// The full network: linear expression adaptor plus per-gene embeddings,
// M stacked bidirectional Hyena blocks, and the regression and
// classification heads.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "schyena/hyena.hpp"
#include "schyena/mask.hpp"

namespace schyena {

struct ModelConfig {
  Index genes = 0;   // L
  Index width = 128; // D
  int blocks = 4;    // M
  int order = 3;     // N
  Index filter_hidden = 32;  // F
  int frequencies = 8;       // K
  std::optional<Index> num_classes;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

struct ModelParams {
  ModelConfig config;
  Tensor adaptor_weight;  // 1×D
  Tensor adaptor_bias;    // 1×D
  Tensor gene_table;      // L×D
  Tensor mask_embedding;  // 1×D
  Tensor cls_embedding;   // 1×D
  std::vector<HyenaBlock> blocks;
  Linear mem_head;                // D → 1
  std::optional<Linear> cls_head; // D → num_classes

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Adds (or replaces) a freshly initialized classification head.
  void reset_classifier(Index num_classes, std::uint64_t seed);

  void visit(const ParamVisitor& visitor);
  // Handles share storage with this model.
  std::vector<NamedParameter> parameters() const;
  Index parameter_count() const;

  // Deep copy: new leaves, same values, no gradients.
  ModelParams clone() const;
};

// Input embeddings, (L or L+1)×D. Masked positions use the mask embedding
// in place of the expression embedding; the CLS row carries no gene
// embedding.
Tensor embed(const Vector& expressions, const MaskPlan& mask, bool include_cls, const ModelParams& params);

// Final block output for the given input embeddings.
Tensor encode(const Tensor& embeddings, const ModelParams& params);

// L×1 predicted expression for every position.
Tensor forward_mem(const Vector& expressions, const MaskPlan& mask, const ModelParams& params);

// 1×num_classes logits read from the CLS position.
Tensor forward_classify(const Vector& expressions, const ModelParams& params);

// Mean over positions of the final block output (no CLS, no mask).
Vector extract_cell_embedding(const Vector& expressions, const ModelParams& params);

}  // namespace schyena
