#pragma once

// Checkpoint directory layout:
//
//   <dir>/manifest.json          config, tensor names/shapes, version, provenance
//   <dir>/tensors/<name>.<dtype> raw little-endian payload, row-major
//
// dtype is f64 (default, bit-exact round trip) or f32 (compact export).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "schyena/model.hpp"

namespace schyena {

inline constexpr int kCheckpointVersion = 1;

enum class PayloadType { f64, f32 };

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  std::string origin;  // e.g. the task that produced it
  std::vector<std::string> class_names;
  std::vector<std::string> gene_ids;
};

void save_checkpoint(const ModelParams& model, const std::filesystem::path& dir, const CheckpointMetadata& metadata = {},
                     PayloadType dtype = PayloadType::f64);

struct LoadedCheckpoint {
  ModelParams model;
  CheckpointMetadata metadata;
};

// Throws CheckpointVersionError, CheckpointShapeError or
// CheckpointTruncatedError for the corresponding defects.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace schyena
