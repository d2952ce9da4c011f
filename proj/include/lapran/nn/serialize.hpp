#pragma once

// Named-tensor container ("LPWT"): little-endian header, then per entry the
// name, shape and raw float32 payload. Used for stage weights and optimizer
// moments alike.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapran/tensor.hpp"

namespace lapran::nn {

struct NamedTensors {
  // Ordered map so serialization order is canonical.
  std::map<std::string, Tensorf> entries;

  void put(const std::string& name, std::vector<long> shape, const VecX<float>& data) {
    entries[name] = Tensorf(std::move(shape), data);
  }

  const Tensorf& get(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("tensor container: missing " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return entries.count(name) > 0; }
};

inline void save_tensors(const NamedTensors& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const char magic[4] = {'L', 'P', 'W', 'T'};
  std::uint32_t version = 1, count = static_cast<std::uint32_t>(t.entries.size());
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, tensor] : t.entries) {
    auto nlen = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&nlen), 4);
    out.write(name.data(), nlen);
    auto ndim = static_cast<std::uint32_t>(tensor.shape.size());
    out.write(reinterpret_cast<const char*>(&ndim), 4);
    for (long d : tensor.shape) {
      std::int64_t v = d;
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline NamedTensors load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  std::uint32_t version = 0, count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || std::memcmp(magic, "LPWT", 4) != 0 || version != 1)
    throw std::runtime_error("bad tensor container: " + path.string());
  NamedTensors t;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    std::uint32_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), 4);
    std::vector<long> shape(ndim);
    for (auto& d : shape) {
      std::int64_t v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      d = static_cast<long>(v);
    }
    Tensorf tensor(shape);
    in.read(reinterpret_cast<char*>(tensor.data.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated tensor container: " + path.string());
    t.entries[name] = std::move(tensor);
  }
  return t;
}

}  // namespace lapran::nn
