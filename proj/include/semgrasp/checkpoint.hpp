// Checkpoint archive: one binary file holding a JSON metadata block (config
// echo, category table, version) followed by named float32 weight arrays.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "semgrasp/nn.hpp"
#include "semgrasp/tensor.hpp"

namespace semgrasp {

constexpr char kCheckpointMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '0', '\n'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> arrays;
};

namespace detail {

template <class T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                            const std::vector<Param*>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_pod<std::uint32_t>(f, kCheckpointVersion);

  nlohmann::json m = meta;
  m["format_version"] = kCheckpointVersion;
  const std::string blob = m.dump();
  detail::write_pod<std::uint64_t>(f, blob.size());
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(p->name.size()));
    f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(p->w.c));
    detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(p->w.h));
    detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(p->w.w));
    f.write(reinterpret_cast<const char*>(p->w.v.data()),
            static_cast<std::streamsize>(p->w.v.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(f);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint out;
  const auto json_len = detail::read_pod<std::uint64_t>(f);
  std::string blob(json_len, '\0');
  f.read(blob.data(), static_cast<std::streamsize>(json_len));
  if (!f) throw std::runtime_error("checkpoint: truncated metadata in " + path);
  out.meta = nlohmann::json::parse(blob);

  const auto n = detail::read_pod<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto c = detail::read_pod<std::uint32_t>(f);
    const auto h = detail::read_pod<std::uint32_t>(f);
    const auto w = detail::read_pod<std::uint32_t>(f);
    Tensor t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated array '" + name + "'");
    out.arrays.emplace(std::move(name), std::move(t));
  }
  return out;
}

/// Copies stored arrays into the model's parameters; any missing array or
/// shape mismatch is an error naming the parameter.
inline void load_weights(const Checkpoint& ckpt, const std::vector<Param*>& params) {
  for (Param* p : params) {
    const auto it = ckpt.arrays.find(p->name);
    if (it == ckpt.arrays.end())
      throw std::runtime_error("checkpoint: missing array '" + p->name + "'");
    if (!it->second.same_shape(p->w))
      throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "'");
    p->w = it->second;
  }
}

}  // namespace semgrasp
