#pragma once

// File-backed experiment configuration: hierarchical JSON with strict schema
// validation (unknown keys rejected) and a content hash embedded in every
// output artifact.

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "lapran/sensing.hpp"
#include "lapran/trainer.hpp"

namespace lapran::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string kind = "synth-digits";  // synth-digits | synth-textures | directory
  std::string path;                   // image directory when kind == "directory"
  long count = 256;                   // generated images for synth kinds
  int patch_side = 64;
  int stride = 64;
  bool augment_rotations = false;
  bool augment_flips = false;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (kind != "synth-digits" && kind != "synth-textures" && kind != "directory")
      throw ConfigError("data.kind must be synth-digits, synth-textures or directory");
    if (kind == "directory" && path.empty())
      throw ConfigError("data.path required when data.kind is directory");
    if (count < 1) throw ConfigError("data.count must be >= 1");
  }
};

struct ExperimentConfig {
  sensing::SensingConfig sensing;
  double cr = 0;  // > 0: base_dim derived from the final-stage CR target
  long filters = 64;
  train::TrainConfig train;
  DataConfig data;

  void finalize() {
    if (cr > 0)
      sensing.base_dim =
          sensing::base_dim_for_cr(cr, sensing.beta, sensing.stages, sensing.signal_dim);
    sensing.validate();
    train.filters = filters;
    train.validate();
    data.validate();
    const int expect_side = 8 << (sensing.stages - 1);
    if (data.patch_side != expect_side)
      throw ConfigError("data.patch_side must be 8*2^(stages-1) = " +
                        std::to_string(expect_side));
    if (static_cast<std::int64_t>(data.patch_side) * data.patch_side != sensing.signal_dim)
      throw ConfigError("sensing.signal_dim must equal patch_side^2");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse(const nlohmann::json& j) {
  detail::check_keys(j, {"sensing", "model", "train", "data", "loss"}, "<root>");
  ExperimentConfig cfg;

  if (j.contains("sensing")) {
    const auto& s = j.at("sensing");
    detail::check_keys(s,
                       {"base_dim", "cr", "beta_num", "beta_den", "stages", "signal_side",
                        "channels", "seed"},
                       "sensing");
    detail::read_if(s, "base_dim", cfg.sensing.base_dim);
    detail::read_if(s, "cr", cfg.cr);
    detail::read_if(s, "beta_num", cfg.sensing.beta.num);
    detail::read_if(s, "beta_den", cfg.sensing.beta.den);
    detail::read_if(s, "stages", cfg.sensing.stages);
    if (s.contains("signal_side")) {
      const auto side = s.at("signal_side").get<std::int64_t>();
      cfg.sensing.signal_dim = side * side;
    }
    detail::read_if(s, "channels", cfg.sensing.channels);
    detail::read_if(s, "seed", cfg.sensing.seed);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"filters"}, "model");
    detail::read_if(m, "filters", cfg.filters);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t,
                       {"batch_size", "max_epochs", "learning_rate", "adam_beta1",
                        "adam_beta2", "adam_eps", "early_stop_patience", "seed", "transfer",
                        "fusion"},
                       "train");
    detail::read_if(t, "batch_size", cfg.train.batch_size);
    detail::read_if(t, "max_epochs", cfg.train.max_epochs);
    detail::read_if(t, "learning_rate", cfg.train.learning_rate);
    detail::read_if(t, "adam_beta1", cfg.train.adam_beta1);
    detail::read_if(t, "adam_beta2", cfg.train.adam_beta2);
    detail::read_if(t, "adam_eps", cfg.train.adam_eps);
    detail::read_if(t, "early_stop_patience", cfg.train.early_stop_patience);
    detail::read_if(t, "seed", cfg.train.seed);
    detail::read_if(t, "transfer", cfg.train.transfer);
    detail::read_if(t, "fusion", cfg.train.fusion);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::check_keys(l, {"lambda_adv", "lambda_euc"}, "loss");
    detail::read_if(l, "lambda_adv", cfg.train.loss_weights.lambda_adv);
    detail::read_if(l, "lambda_euc", cfg.train.loss_weights.lambda_euc);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::check_keys(d,
                       {"kind", "path", "count", "patch_side", "stride",
                        "augment_rotations", "augment_flips", "train_ratio", "val_ratio",
                        "test_ratio", "seed"},
                       "data");
    detail::read_if(d, "kind", cfg.data.kind);
    detail::read_if(d, "path", cfg.data.path);
    detail::read_if(d, "count", cfg.data.count);
    detail::read_if(d, "patch_side", cfg.data.patch_side);
    detail::read_if(d, "stride", cfg.data.stride);
    detail::read_if(d, "augment_rotations", cfg.data.augment_rotations);
    detail::read_if(d, "augment_flips", cfg.data.augment_flips);
    detail::read_if(d, "train_ratio", cfg.data.train_ratio);
    detail::read_if(d, "val_ratio", cfg.data.val_ratio);
    detail::read_if(d, "test_ratio", cfg.data.test_ratio);
    detail::read_if(d, "seed", cfg.data.seed);
  } else {
    cfg.data.patch_side = 8 << (cfg.sensing.stages - 1);
  }
  cfg.finalize();
  return cfg;
}

inline ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config parse failure in " + path.string() + ": " + e.what());
  }
  return parse(j);
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  return {{"sensing",
           {{"base_dim", cfg.sensing.base_dim},
            {"cr", cfg.cr},
            {"beta_num", cfg.sensing.beta.num},
            {"beta_den", cfg.sensing.beta.den},
            {"stages", cfg.sensing.stages},
            {"signal_dim", cfg.sensing.signal_dim},
            {"channels", cfg.sensing.channels},
            {"seed", cfg.sensing.seed}}},
          {"model", {{"filters", cfg.filters}}},
          {"train", cfg.train.to_json()},
          {"data",
           {{"kind", cfg.data.kind},
            {"path", cfg.data.path},
            {"count", cfg.data.count},
            {"patch_side", cfg.data.patch_side},
            {"stride", cfg.data.stride},
            {"augment_rotations", cfg.data.augment_rotations},
            {"augment_flips", cfg.data.augment_flips},
            {"train_ratio", cfg.data.train_ratio},
            {"val_ratio", cfg.data.val_ratio},
            {"test_ratio", cfg.data.test_ratio},
            {"seed", cfg.data.seed}}}};
}

/// FNV-1a 64-bit hash of the canonical serialized form, as a hex string.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace lapran::config
