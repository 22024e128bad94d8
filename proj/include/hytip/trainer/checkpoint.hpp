#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "hytip/codec/config_io.hpp"
#include "hytip/codec/model.hpp"

namespace hytip::trainer {

// Container: "HYCK", u32 version, u64 header length, JSON header, then the
// parameter blobs back to back (little-endian). The header carries the model
// config, a free-form "meta" object (phase cursor, seeds) and one entry per
// parameter with its shape and byte offset.

inline constexpr char kCheckpointMagic[4] = {'H', 'Y', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

template <class T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <class T>
void save_checkpoint(const std::string& path, codec::Model<T>& model, const nlohmann::json& meta) {
  auto params = model.parameters();
  nlohmann::json header;
  header["config"] = codec::to_json(model.config());
  header["meta"] = meta;
  header["dtype"] = dtype_name<T>();
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& np : params) {
    const auto& s = np.param->value().shape();
    entries.push_back({{"name", np.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += np.param->value().size() * sizeof(T);
  }
  header["params"] = entries;
  const std::string text = header.dump();

  const std::filesystem::path final_path(path);
  if (final_path.has_parent_path()) std::filesystem::create_directories(final_path.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp);
    const std::uint64_t len = text.size();
    f.write(kCheckpointMagic, 4);
    f.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& np : params) {
      const auto& v = np.param->value();
      f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, final_path);
}

struct CheckpointHeader {
  codec::ModelConfig config;
  nlohmann::json meta;
  nlohmann::json raw;
  std::uint64_t blob_start = 0;
};

inline CheckpointHeader read_checkpoint_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw std::runtime_error("checkpoint " + path + ": bad magic");
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&len), 8);
  if (!f || version != kCheckpointVersion)
    throw std::runtime_error("checkpoint " + path + ": unsupported version " + std::to_string(version));
  if (len > (std::uint64_t{1} << 30)) throw std::runtime_error("checkpoint " + path + ": header too large");
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("checkpoint " + path + ": truncated header");
  CheckpointHeader h;
  h.raw = nlohmann::json::parse(text);
  h.config = codec::model_config_from_json(h.raw.at("config"));
  h.meta = h.raw.value("meta", nlohmann::json::object());
  h.blob_start = 16 + len;
  return h;
}

/// Copies stored weights into `model`. Every model parameter must be present
/// with the same shape.
template <class T>
void load_weights(const std::string& path, codec::Model<T>& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  const auto h = read_checkpoint_header(f, path);
  const std::string dtype = h.raw.at("dtype").get<std::string>();
  const std::size_t elem = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
  if (elem == 0) throw std::runtime_error("checkpoint " + path + ": unknown dtype " + dtype);
  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : h.raw.at("params")) entries[e.at("name").get<std::string>()] = e;
  for (auto& np : model.parameters()) {
    auto it = entries.find(np.name);
    if (it == entries.end()) throw std::runtime_error("checkpoint " + path + ": missing parameter " + np.name);
    auto& v = np.param->value();
    const auto shape = it->second.at("shape").template get<std::vector<int>>();
    const auto& s = v.shape();
    if (shape != std::vector<int>{s.n, s.c, s.h, s.w})
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + np.name);
    f.seekg(static_cast<std::streamoff>(h.blob_start + it->second.at("offset").template get<std::uint64_t>()));
    if (elem == sizeof(T)) {
      f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    } else {
      std::vector<char> buf(v.size() * elem);
      f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (elem == 4) {
          float x;
          std::memcpy(&x, buf.data() + 4 * i, 4);
          v[i] = static_cast<T>(x);
        } else {
          double x;
          std::memcpy(&x, buf.data() + 8 * i, 8);
          v[i] = static_cast<T>(x);
        }
      }
    }
    if (!f) throw std::runtime_error("checkpoint " + path + ": truncated blob for " + np.name);
  }
}

/// Builds the model described by the checkpoint and loads its weights.
template <class T>
codec::Model<T> load_checkpoint(const std::string& path, nlohmann::json* meta = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  const auto h = read_checkpoint_header(f, path);
  if (meta) *meta = h.meta;
  codec::Model<T> model(h.config, 0);
  load_weights(path, model);
  return model;
}

}  // namespace hytip::trainer
