#pragma once

// MRCS measurement container: fixed little-endian header followed by the
// final-stage float32 vector per channel. Lower stages are implicit prefixes.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "lapran/sensing.hpp"

namespace lapran::mrcs {

inline constexpr char kMagic[4] = {'M', 'R', 'C', 'S'};
inline constexpr std::uint32_t kVersion = 1;

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#pragma pack(push, 1)
struct Header {
  char magic[4];
  std::uint32_t version;
  std::int64_t base_dim;
  std::int64_t beta_num;
  std::int64_t beta_den;
  std::int32_t stages;
  std::int64_t signal_dim;
  std::int32_t channels;
  std::uint64_t seed;
};
#pragma pack(pop)

static_assert(sizeof(Header) == 4 + 4 + 8 * 3 + 4 + 8 + 4 + 8);

inline void write(const std::filesystem::path& path, const sensing::SensingConfig& cfg,
                  const sensing::MeasurementSet& ms) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("mrcs: cannot open for writing: " + path.string());
  Header h{};
  std::memcpy(h.magic, kMagic, 4);
  h.version = kVersion;
  h.base_dim = cfg.base_dim;
  h.beta_num = cfg.beta.num;
  h.beta_den = cfg.beta.den;
  h.stages = cfg.stages;
  h.signal_dim = cfg.signal_dim;
  h.channels = cfg.channels;
  h.seed = cfg.seed;
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (const auto& v : ms.full)
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw FileError("mrcs: write failed: " + path.string());
}

struct File {
  sensing::SensingConfig config;
  sensing::MeasurementSet measurements;
};

/// Reads a possibly truncated file: any whole-float prefix of the payload is
/// accepted and reported via the measurement vector lengths.
inline File read(const std::filesystem::path& path, bool allow_truncated = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("mrcs: cannot open: " + path.string());
  Header h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in || std::memcmp(h.magic, kMagic, 4) != 0)
    throw FileError("mrcs: bad magic at byte 0: " + path.string());
  if (h.version != kVersion)
    throw FileError("mrcs: unsupported version " + std::to_string(h.version));

  File f;
  f.config.base_dim = h.base_dim;
  f.config.beta = {h.beta_num, h.beta_den};
  f.config.stages = h.stages;
  f.config.signal_dim = h.signal_dim;
  f.config.channels = h.channels;
  f.config.seed = h.seed;
  f.config.validate();

  auto dims = f.config.stage_dims();
  const std::int64_t full_len = dims.back();
  std::vector<float> payload;
  payload.resize(static_cast<size_t>(full_len * h.channels));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  const std::int64_t floats_read = in.gcount() / static_cast<std::streamsize>(sizeof(float));
  if (floats_read < full_len * h.channels && !allow_truncated)
    throw FileError("mrcs: truncated payload at byte " +
                    std::to_string(sizeof(Header) + in.gcount()) + ": " + path.string());
  const std::int64_t per_channel = floats_read / h.channels;
  if (per_channel < dims.front())
    throw FileError("mrcs: payload shorter than the stage-1 prefix: " + path.string());

  auto& ms = f.measurements;
  ms.stage_dims = dims;
  ms.channels = h.channels;
  std::int64_t side = static_cast<std::int64_t>(std::llround(std::sqrt(double(h.signal_dim))));
  ms.height = ms.width = side;
  for (int c = 0; c < h.channels; ++c) {
    VecX<float> v(per_channel);
    // Truncated files hold the channel blocks back to back at full length, so a
    // short read only yields complete prefixes when channels == 1 or the file
    // was written truncated per channel; we slice what is present.
    std::memcpy(v.data(), payload.data() + c * per_channel,
                static_cast<size_t>(per_channel) * sizeof(float));
    ms.full.push_back(std::move(v));
  }
  return f;
}

/// Writes only the first `keep` floats per channel, the on-disk form of a
/// transmission cut short.
inline void write_truncated(const std::filesystem::path& path,
                            const sensing::SensingConfig& cfg,
                            const sensing::MeasurementSet& ms, std::int64_t keep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("mrcs: cannot open for writing: " + path.string());
  Header h{};
  std::memcpy(h.magic, kMagic, 4);
  h.version = kVersion;
  h.base_dim = cfg.base_dim;
  h.beta_num = cfg.beta.num;
  h.beta_den = cfg.beta.den;
  h.stages = cfg.stages;
  h.signal_dim = cfg.signal_dim;
  h.channels = cfg.channels;
  h.seed = cfg.seed;
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (const auto& v : ms.full)
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(std::min<std::int64_t>(keep, v.size()) *
                                           sizeof(float)));
}

}  // namespace lapran::mrcs
