#pragma once

// Glue between configs and the training/evaluation machinery: dataset
// assembly, run-directory persistence, and the eval protocol.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lapran/config.hpp"
#include "lapran/metrics.hpp"
#include "lapran/reconstructor.hpp"
#include "lapran/synth.hpp"
#include "lapran/trainer.hpp"

namespace lapran::experiment {

struct Splits {
  train::Dataset train, val, test;
};

inline std::vector<ImageTensor> build_images(const config::DataConfig& data, int channels) {
  std::vector<ImageTensor> images;
  if (data.kind == "synth-digits")
    images = synth::digit_set(static_cast<int>(data.count), data.patch_side, data.seed);
  else if (data.kind == "synth-textures")
    images = synth::texture_set(static_cast<int>(data.count), data.patch_side, data.seed);
  else
    return load_directory(data.path, channels, data.patch_side);
  for (auto& img : images) img = to_channels(img, channels);
  return images;
}

/// Source-level split, then patch extraction and augmentation (train only).
inline Splits assemble(const config::ExperimentConfig& cfg,
                       const sensing::MultiRateSensingMatrix& mat) {
  auto images = build_images(cfg.data, cfg.sensing.channels);
  std::vector<std::string> ids(images.size());
  for (size_t i = 0; i < images.size(); ++i) ids[i] = std::to_string(i);
  auto manifests = split_dataset("data", ids, cfg.data.train_ratio, cfg.data.val_ratio,
                                 cfg.data.test_ratio, cfg.data.seed);

  Splits out;
  for (int s = 0; s < 3; ++s) {
    std::vector<ImageTensor> members;
    for (const auto& id : manifests[static_cast<size_t>(s)].sources)
      members.push_back(images[static_cast<size_t>(std::stoul(id))]);
    auto patches = extract_patches(members, cfg.data.patch_side, cfg.data.stride);
    if (s == 0 && (cfg.data.augment_rotations || cfg.data.augment_flips)) {
      std::vector<ImageTensor> aug;
      for (const auto& p : patches)
        for (auto& a : augment(p, cfg.data.augment_rotations, cfg.data.augment_flips))
          aug.push_back(std::move(a));
      patches = std::move(aug);
    }
    auto& ds = s == 0 ? out.train : (s == 1 ? out.val : out.test);
    ds = train::prepare(patches, mat);
  }
  return out;
}

inline void write_run_manifest(const std::filesystem::path& run_dir,
                               const config::ExperimentConfig& cfg) {
  std::filesystem::create_directories(run_dir);
  nlohmann::json run = {{"config_hash", config::config_hash(cfg)},
                        {"config", config::to_json(cfg)},
                        {"sensing",
                         {{"base_dim", cfg.sensing.base_dim},
                          {"beta_num", cfg.sensing.beta.num},
                          {"beta_den", cfg.sensing.beta.den},
                          {"stages", cfg.sensing.stages},
                          {"signal_dim", cfg.sensing.signal_dim},
                          {"channels", cfg.sensing.channels},
                          {"seed", cfg.sensing.seed}}}};
  std::ofstream out(run_dir / "run.json");
  out << run.dump(2) << "\n";
}

/// Trains the requested stage range sequentially, persisting each stage under
/// the run directory; earlier stages are loaded from existing checkpoints.
inline std::vector<train::Checkpoint> run_train(const config::ExperimentConfig& cfg,
                                                const std::filesystem::path& run_dir,
                                                int first_stage, int last_stage,
                                                const Splits& splits,
                                                const sensing::MultiRateSensingMatrix& mat) {
  write_run_manifest(run_dir, cfg);
  const std::string hash = config::config_hash(cfg);
  std::vector<train::Checkpoint> cks;
  for (int i = 1; i < first_stage; ++i)
    cks.push_back(train::load_checkpoint(run_dir / ("stage" + std::to_string(i))));
  for (int stage = first_stage; stage <= last_stage; ++stage) {
    const nn::NamedTensors* src = nullptr;
    if (cfg.train.transfer && stage >= 2) src = &cks.back().weights;
    auto ck = train::train_stage(stage, splits.train, splits.val, mat, cks, cfg.train, src);
    train::save_checkpoint(ck, run_dir / ("stage" + std::to_string(stage)), hash);
    cks.push_back(std::move(ck));
  }
  return cks;
}

/// Table-style evaluation on the test split at the config's sensing budget.
inline metrics::QualityReport run_eval(const config::ExperimentConfig& cfg,
                                       const recon::CascadeBundle& bundle,
                                       const Splits& splits,
                                       const sensing::MultiRateSensingMatrix& mat) {
  const auto& test = splits.test;
  std::vector<ImagePyramid> truth = test.pyramids;
  size_t next = 0;
  auto reconstruct_fn = [&](const ImagePyramid&) {
    return recon::reconstruct(test.measurements[next++], bundle);
  };
  auto report = metrics::evaluate(
      cfg.data.kind, sensing::compression_ratio(cfg.sensing, cfg.sensing.stages), truth,
      reconstruct_fn);
  report.config_hash = config::config_hash(cfg);
  return report;
}

/// In-memory bundle assembled straight from checkpoints (no disk round-trip).
inline recon::CascadeBundle make_bundle(const config::ExperimentConfig& cfg,
                                        const std::vector<train::Checkpoint>& cks) {
  recon::CascadeBundle bundle;
  bundle.sensing_cfg = cfg.sensing;
  bundle.stage_dims = cfg.sensing.stage_dims();
  for (auto d : bundle.stage_dims)
    bundle.cr_thresholds.push_back(static_cast<double>(cfg.sensing.signal_dim) /
                                   static_cast<double>(d));
  for (const auto& ck : cks) {
    bundle.specs.push_back(ck.spec);
    if (ck.stage == 1) {
      bundle.first = std::make_unique<models::RecGenFirst<float>>(ck.spec);
      models::restore(models::full_state(*bundle.first), ck.weights);
    } else {
      auto g = std::make_unique<models::RecGenStage<float>>(ck.spec);
      models::restore(models::full_state(*g), ck.weights);
      bundle.upper.push_back(std::move(g));
    }
  }
  return bundle;
}

}  // namespace lapran::experiment
