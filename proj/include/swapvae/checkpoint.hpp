#pragma once

// Checkpoint container: a JSON manifest "<prefix>.json" describing a tensor
// table plus an adjacent raw blob "<prefix>.bin" of 64-bit IEEE-754
// little-endian values stored in manifest order. Counters (optimizer step,
// RNG states) are stored as decimal strings so 64-bit values survive JSON.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "swapvae/errors.hpp"
#include "swapvae/matrix.hpp"

namespace swapvae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts unsupported");
static_assert(sizeof(double) == 8, "checkpoint format requires 64-bit doubles");

inline constexpr const char* kCheckpointVersion = "swapvae-ckpt-1";

// Ordered view over the tensors a model wants persisted. Pointers stay owned
// by the model; names must be unique.
using StateDict = std::vector<std::pair<std::string, Matrix*>>;

struct Checkpoint {
  std::map<std::string, Matrix> tensors;
  std::vector<std::string> order;  // manifest order of tensor names
  std::map<std::string, std::string> counters;
  nlohmann::json model_config;
};

inline void save_checkpoint(const std::string& prefix, const StateDict& state,
                            const std::map<std::string, std::string>& counters,
                            const nlohmann::json& model_config) {
  nlohmann::json table = nlohmann::json::array();
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw data_error("cannot write checkpoint blob: " + prefix + ".bin");
  size_t offset = 0;
  for (const auto& [name, mat] : state) {
    table.push_back({{"name", name},
                     {"shape", {mat->rows, mat->cols}},
                     {"byte_offset", offset},
                     {"elements", mat->size()}});
    bin.write(reinterpret_cast<const char*>(mat->data.data()),
              static_cast<std::streamsize>(mat->size() * sizeof(double)));
    offset += mat->size() * sizeof(double);
  }
  bin.close();
  if (!bin) throw data_error("short write on checkpoint blob: " + prefix + ".bin");
  nlohmann::json manifest = {{"format", kCheckpointVersion},
                             {"total_bytes", offset},
                             {"tensors", table},
                             {"counters", counters},
                             {"model_config", model_config}};
  std::ofstream js(prefix + ".json", std::ios::trunc);
  if (!js) throw data_error("cannot write checkpoint manifest: " + prefix + ".json");
  js << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw data_error("cannot open checkpoint manifest: " + prefix + ".json");
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed checkpoint manifest " + prefix + ".json: " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointVersion)
    throw data_error("unsupported checkpoint format in " + prefix + ".json");

  std::ifstream bin(prefix + ".bin", std::ios::binary | std::ios::ate);
  if (!bin) throw data_error("cannot open checkpoint blob: " + prefix + ".bin");
  const auto file_bytes = static_cast<uint64_t>(bin.tellg());
  if (file_bytes != manifest.at("total_bytes").get<uint64_t>())
    throw data_error("checkpoint blob length mismatch for " + prefix);
  bin.seekg(0);

  Checkpoint ck;
  uint64_t expect_offset = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<size_t>>();
    const auto offset = entry.at("byte_offset").get<uint64_t>();
    const auto elements = entry.at("elements").get<uint64_t>();
    if (shape.size() != 2 || shape[0] * shape[1] != elements)
      throw data_error("inconsistent tensor entry '" + name + "' in " + prefix);
    if (offset != expect_offset)
      throw data_error("non-contiguous tensor table in " + prefix);
    Matrix m(shape[0], shape[1]);
    bin.read(reinterpret_cast<char*>(m.data.data()),
             static_cast<std::streamsize>(elements * sizeof(double)));
    if (static_cast<uint64_t>(bin.gcount()) != elements * sizeof(double))
      throw data_error("truncated checkpoint blob at tensor '" + name + "'");
    ck.order.push_back(name);
    ck.tensors.emplace(name, std::move(m));
    expect_offset = offset + elements * sizeof(double);
  }
  if (expect_offset != file_bytes)
    throw data_error("checkpoint blob has trailing bytes: " + prefix);
  if (manifest.contains("counters"))
    ck.counters = manifest.at("counters").get<std::map<std::string, std::string>>();
  if (manifest.contains("model_config")) ck.model_config = manifest.at("model_config");
  return ck;
}

// Copies loaded tensors into an existing state dict, requiring exact name and
// shape agreement in both directions.
inline void restore_state(const Checkpoint& ck, const StateDict& state) {
  if (ck.tensors.size() != state.size())
    throw data_error("checkpoint tensor count mismatch: file has " +
                     std::to_string(ck.tensors.size()) + ", model expects " +
                     std::to_string(state.size()));
  for (const auto& [name, mat] : state) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw data_error("checkpoint missing tensor '" + name + "'");
    const Matrix& src = it->second;
    if (src.rows != mat->rows || src.cols != mat->cols)
      throw data_error("checkpoint tensor '" + name + "' shape mismatch");
    mat->data = src.data;
  }
}

inline uint64_t counter_u64(const Checkpoint& ck, const std::string& key) {
  auto it = ck.counters.find(key);
  if (it == ck.counters.end()) throw data_error("checkpoint missing counter '" + key + "'");
  return std::stoull(it->second);
}

}  // namespace swapvae
