#include "schyena/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "schyena/config_json.hpp"

namespace schyena {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

const char* extension(PayloadType t) { return t == PayloadType::f64 ? ".f64" : ".f32"; }

std::size_t element_size(PayloadType t) { return t == PayloadType::f64 ? 8 : 4; }

void write_payload(const Matrix& value, const std::filesystem::path& path, PayloadType dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  if (dtype == PayloadType::f64) {
    os.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
  } else {
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> narrow = value.cast<float>();
    os.write(reinterpret_cast<const char*>(narrow.data()), static_cast<std::streamsize>(narrow.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("failed writing " + path.string());
}

Matrix read_payload(const std::filesystem::path& path, Index rows, Index cols, PayloadType dtype) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointTruncatedError("missing payload " + path.string());
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * element_size(dtype);
  const auto actual = std::filesystem::file_size(path);
  if (actual < expected)
    throw CheckpointTruncatedError("payload " + path.string() + " has " + std::to_string(actual) + " bytes, expected " +
                                   std::to_string(expected));
  if (actual > expected)
    throw CheckpointShapeError("payload " + path.string() + " has " + std::to_string(actual) +
                               " bytes, more than its manifest shape allows (" + std::to_string(expected) + ")");
  Matrix out(rows, cols);
  if (dtype == PayloadType::f64) {
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected));
  } else {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> narrow(rows, cols);
    is.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(expected));
    out = narrow.cast<double>();
  }
  if (!is) throw CheckpointTruncatedError("short read from " + path.string());
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::filesystem::path& dir, const CheckpointMetadata& metadata,
                     PayloadType dtype) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::json manifest;
  manifest["format"] = "schyena-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = dtype == PayloadType::f64 ? "f64" : "f32";
  manifest["config"] = model.config;
  manifest["seed"] = metadata.seed;
  manifest["origin"] = metadata.origin;
  manifest["class_names"] = metadata.class_names;
  manifest["gene_ids"] = metadata.gene_ids;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    const std::string file = "tensors/" + p.name + extension(dtype);
    write_payload(p.tensor.value(), dir / file, dtype);
    tensors.push_back({{"name", p.name}, {"shape", {p.tensor.rows(), p.tensor.cols()}}, {"file", file}});
  }
  manifest["tensors"] = tensors;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw CheckpointError("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw CheckpointError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "schyena-checkpoint") throw CheckpointError("not a checkpoint manifest");
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  const std::string dtype_name = manifest.value("dtype", "f64");
  if (dtype_name != "f64" && dtype_name != "f32") throw CheckpointError("unknown payload dtype '" + dtype_name + "'");
  const PayloadType dtype = dtype_name == "f64" ? PayloadType::f64 : PayloadType::f32;

  LoadedCheckpoint out;
  const ModelConfig config = manifest.at("config").get<ModelConfig>();
  out.model = ModelParams::init(config, 0);
  out.metadata.seed = manifest.value("seed", std::uint64_t{0});
  out.metadata.origin = manifest.value("origin", "");
  out.metadata.class_names = manifest.value("class_names", std::vector<std::string>{});
  out.metadata.gene_ids = manifest.value("gene_ids", std::vector<std::string>{});

  std::map<std::string, nlohmann::json> entries;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    if (!entries.emplace(name, t).second) throw CheckpointShapeError("tensor '" + name + "' listed twice");
  }
  std::size_t used = 0;
  out.model.visit([&](const std::string& name, Tensor& tensor, bool) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointShapeError("manifest lacks tensor '" + name + "'");
    const auto shape = it->second.at("shape").get<std::vector<Index>>();
    if (shape.size() != 2 || shape[0] != tensor.rows() || shape[1] != tensor.cols())
      throw CheckpointShapeError("tensor '" + name + "' has manifest shape that does not match the model config");
    tensor = Tensor(read_payload(dir / it->second.at("file").get<std::string>(), shape[0], shape[1], dtype), true);
    ++used;
  });
  if (used != entries.size()) throw CheckpointShapeError("manifest lists tensors the model does not have");
  return out;
}

}  // namespace schyena
