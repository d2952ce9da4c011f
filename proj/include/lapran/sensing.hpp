#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapran/tensor.hpp"

namespace lapran::sensing {

/// Exact ratio between adjacent stage measurement counts.
struct Rational {
  std::int64_t num = 2;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Theoretical ceiling on the measurement increment ratio under a constant
/// per-stage sparsity ratio. Configs above this are rejected.
inline constexpr double kBetaUpperBound = 4.0;

inline double beta_upper_bound() { return kBetaUpperBound; }

/// Minimum measurement count C*k*ln(n/k) (natural log; the constant 0.28 is
/// only consistent with ln).
inline constexpr double kRipConstant = 0.28;

inline std::int64_t rip_lower_bound(std::int64_t sparsity, std::int64_t ambient_dim) {
  if (sparsity <= 0 || ambient_dim <= 0 || sparsity >= ambient_dim)
    throw std::invalid_argument("rip_lower_bound: need 0 < sparsity < ambient_dim");
  const double n = static_cast<double>(ambient_dim);
  const double k = static_cast<double>(sparsity);
  return static_cast<std::int64_t>(std::ceil(kRipConstant * k * std::log(n / k)));
}

/// floor(beta^(i-1) * m) for i in 1..k, computed exactly on the rational beta.
inline std::vector<std::int64_t> derive_stage_dims(std::int64_t m, Rational beta,
                                                   int stages) {
  if (m < 1) throw std::invalid_argument("derive_stage_dims: m must be >= 1");
  if (stages < 1) throw std::invalid_argument("derive_stage_dims: k must be >= 1");
  if (beta.den <= 0 || beta.num <= beta.den)
    throw std::invalid_argument("derive_stage_dims: beta must be > 1");
  if (beta.value() > kBetaUpperBound)
    throw std::invalid_argument("derive_stage_dims: beta exceeds the upper bound 4");
  std::vector<std::int64_t> dims(static_cast<size_t>(stages));
  unsigned __int128 num_pow = 1, den_pow = 1;
  for (int i = 0; i < stages; ++i) {
    unsigned __int128 v = num_pow * static_cast<unsigned __int128>(m) / den_pow;
    if (v > static_cast<unsigned __int128>(INT64_MAX))
      throw std::overflow_error("derive_stage_dims: stage dim overflow");
    dims[static_cast<size_t>(i)] = static_cast<std::int64_t>(v);
    num_pow *= static_cast<unsigned __int128>(beta.num);
    den_pow *= static_cast<unsigned __int128>(beta.den);
  }
  return dims;
}

struct SensingConfig {
  std::int64_t base_dim = 128;   // measurements for stage 1, per channel
  Rational beta{2, 1};
  int stages = 4;
  std::int64_t signal_dim = 4096;  // flattened pixels per channel
  int channels = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (base_dim < 1) throw std::invalid_argument("sensing: base_dim must be >= 1");
    if (stages < 1) throw std::invalid_argument("sensing: stages must be >= 1");
    if (channels != 1 && channels != 3)
      throw std::invalid_argument("sensing: channels must be 1 or 3");
    auto dims = derive_stage_dims(base_dim, beta, stages);
    if (dims.back() > signal_dim)
      throw std::invalid_argument("sensing: more measurements than pixels");
  }

  std::vector<std::int64_t> stage_dims() const {
    return derive_stage_dims(base_dim, beta, stages);
  }
};

/// Seeded Gaussian matrix whose nested row prefixes are the per-stage sensing
/// operators. Never serialized; regenerated bit-identically from (seed, config).
struct MultiRateSensingMatrix {
  SensingConfig config;
  std::vector<std::int64_t> stage_dims;
  MatX<double> full_matrix;  // stage_dims.back() x signal_dim

  auto stage_rows(int stage) const {  // 1-based
    check_stage(stage);
    return full_matrix.topRows(stage_dims[static_cast<size_t>(stage - 1)]);
  }

  void check_stage(int stage) const {
    if (stage < 1 || stage > config.stages)
      throw std::out_of_range("sensing: stage index out of range");
  }
};

inline MultiRateSensingMatrix build_matrices(const SensingConfig& cfg) {
  cfg.validate();
  MultiRateSensingMatrix out;
  out.config = cfg;
  out.stage_dims = cfg.stage_dims();
  const std::int64_t rows = out.stage_dims.back();
  const std::int64_t cols = cfg.signal_dim;
  out.full_matrix.resize(rows, cols);
  Rng rng(cfg.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rows));
  // Row-major fill so prefixes are stable row blocks.
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out.full_matrix(r, c) = dist(rng) * stddev;
  return out;
}

/// Per-channel measurements; only the final-stage vector is stored, lower
/// stages are literal prefixes of it.
struct MeasurementSet {
  std::vector<std::int64_t> stage_dims;
  int channels = 1;
  std::int64_t height = 0, width = 0;
  std::vector<VecX<float>> full;  // one final-stage vector per channel

  int stages() const { return static_cast<int>(stage_dims.size()); }

  /// Prefix of length stage_dims[stage-1] for one channel.
  VecX<float> stage_vector(int stage, int channel) const {
    if (stage < 1 || stage > stages())
      throw std::out_of_range("measurements: stage index out of range");
    return full.at(static_cast<size_t>(channel))
        .head(stage_dims[static_cast<size_t>(stage - 1)]);
  }

  /// Concatenation of the per-channel prefixes, the model-facing layout.
  VecX<float> stage_concat(int stage) const {
    const std::int64_t q = stage_dims.at(static_cast<size_t>(stage - 1));
    VecX<float> out(q * channels);
    for (int c = 0; c < channels; ++c) out.segment(c * q, q) = stage_vector(stage, c);
    return out;
  }
};

/// Projects a [-1,1]-normalized image through the final-stage operator.
/// Accumulates in double; lower stages are never recomputed.
inline MeasurementSet encode(const Tensorf& image, const MultiRateSensingMatrix& mat) {
  const auto& cfg = mat.config;
  if (image.ndim() != 3 || image.dim(0) != cfg.channels ||
      image.dim(1) * image.dim(2) != cfg.signal_dim)
    throw std::invalid_argument("encode: image shape does not match sensing config");
  MeasurementSet ms;
  ms.stage_dims = mat.stage_dims;
  ms.channels = cfg.channels;
  ms.height = image.dim(1);
  ms.width = image.dim(2);
  const std::int64_t n = cfg.signal_dim;
  for (int c = 0; c < cfg.channels; ++c) {
    VecX<double> x = image.data.segment(c * n, n).cast<double>();
    ms.full.push_back((mat.full_matrix * x).cast<float>());
  }
  return ms;
}

inline VecX<float> slice_measurements(const MeasurementSet& ms, int stage, int channel) {
  return ms.stage_vector(stage, channel);
}

/// Toolkit-wide convention: CR of stage i is signal_dim / stage_dims[i-1].
inline double compression_ratio(const SensingConfig& cfg, int stage) {
  auto dims = cfg.stage_dims();
  if (stage < 1 || stage > cfg.stages) throw std::out_of_range("compression_ratio: stage");
  return static_cast<double>(cfg.signal_dim) /
         static_cast<double>(dims[static_cast<size_t>(stage - 1)]);
}

/// Picks base_dim so that the final stage hits the requested CR as closely as
/// possible without exceeding it.
inline std::int64_t base_dim_for_cr(double cr, Rational beta, int stages,
                                    std::int64_t signal_dim) {
  if (cr < 1.0) throw std::invalid_argument("base_dim_for_cr: CR must be >= 1");
  std::int64_t target_final =
      static_cast<std::int64_t>(std::floor(static_cast<double>(signal_dim) / cr));
  if (target_final < 1) throw std::invalid_argument("base_dim_for_cr: CR too high");
  // Largest m whose final stage dim stays within the target.
  std::int64_t lo = 1, hi = target_final;
  while (lo < hi) {
    std::int64_t mid = (lo + hi + 1) / 2;
    if (derive_stage_dims(mid, beta, stages).back() <= target_final)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

}  // namespace lapran::sensing
