#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapran/image.hpp"
#include "lapran/models.hpp"
#include "lapran/mrcs.hpp"
#include "lapran/pyramid.hpp"
#include "lapran/sensing.hpp"

namespace lapran::recon {

using models::RecGenFirst;
using models::RecGenStage;
using models::StageModelSpec;

inline Tensorf image_to_batch(const ImageTensor& img) {
  return Tensorf({1, img.channels(), img.side(), img.side()}, img.data.data);
}

inline ImageTensor batch_to_image(const Tensorf& t, long row = 0) {
  ImageTensor img;
  const long per = t.size() / t.dim(0);
  img.data = Tensorf({t.dim(1), t.dim(2), t.dim(3)}, t.data.segment(row * per, per));
  return img;
}

/// Frozen cascade: stage-1 generator plus the stage >= 2 generators, with the
/// architectural CR thresholds N/stage_dims[i].
struct CascadeBundle {
  sensing::SensingConfig sensing_cfg;
  std::vector<StageModelSpec> specs;
  std::unique_ptr<RecGenFirst<float>> first;
  std::vector<std::unique_ptr<RecGenStage<float>>> upper;  // stages 2..k
  std::vector<std::int64_t> stage_dims;
  std::vector<double> cr_thresholds;  // may be overridden from a config table

  int stages() const { return static_cast<int>(stage_dims.size()); }
};

/// Deepest stage whose full per-channel measurement prefix is available.
inline int select_stages(std::int64_t available_len, const CascadeBundle& bundle) {
  if (available_len < bundle.stage_dims.front())
    throw std::runtime_error("insufficient measurements for any stage (need " +
                             std::to_string(bundle.stage_dims.front()) + ", have " +
                             std::to_string(available_len) + ")");
  int depth = 1;
  for (int i = 2; i <= bundle.stages(); ++i)
    if (bundle.stage_dims[static_cast<size_t>(i - 1)] <= available_len) depth = i;
  return depth;
}

/// Single feed-forward cascade over the enabled stages; every intermediate
/// resolution is returned.
inline ImagePyramid reconstruct(const sensing::MeasurementSet& ms,
                                const CascadeBundle& bundle, int* stages_run = nullptr) {
  std::int64_t available = ms.full.front().size();
  for (const auto& v : ms.full) available = std::min<std::int64_t>(available, v.size());
  const int depth = select_stages(available, bundle);

  ImagePyramid out;
  Tensorf y1({1, bundle.specs[0].latent_dim()});
  {
    auto v = ms.stage_concat(1);
    y1.data = v;
  }
  Tensorf img = bundle.first->forward(y1, false);
  out.levels.push_back(batch_to_image(img));
  for (int stage = 2; stage <= depth; ++stage) {
    const auto& spec = bundle.specs[static_cast<size_t>(stage - 1)];
    Tensorf y({1, spec.latent_dim()});
    y.data = ms.stage_concat(stage);
    auto so = bundle.upper[static_cast<size_t>(stage - 2)]->forward(img, y, false);
    img = so.output;
    out.levels.push_back(batch_to_image(img));
  }
  if (stages_run) *stages_run = depth;
  return out;
}

struct TimingRow {
  std::string input;
  int stages_run = 0;
  double milliseconds = 0;
};

/// Reads an MRCS file (truncation allowed), writes one PNG per pyramid level
/// and records wall time.
inline TimingRow reconstruct_file(const std::filesystem::path& path,
                                  const CascadeBundle& bundle,
                                  const std::filesystem::path& out_dir) {
  auto file = mrcs::read(path, /*allow_truncated=*/true);
  std::filesystem::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  int depth = 0;
  ImagePyramid pyr = reconstruct(file.measurements, bundle, &depth);
  const auto t1 = std::chrono::steady_clock::now();
  for (int i = 1; i <= pyr.stages(); ++i) {
    const auto& lvl = pyr.level(i);
    save_png(lvl, out_dir / ("level" + std::to_string(i) + "_" +
                             std::to_string(lvl.side()) + "px.png"));
  }
  TimingRow row;
  row.input = path.string();
  row.stages_run = depth;
  row.milliseconds = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return row;
}

inline void append_timing_csv(const std::filesystem::path& path,
                              const std::vector<TimingRow>& rows) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "input,stages_run,milliseconds\n";
  for (const auto& r : rows)
    out << r.input << "," << r.stages_run << "," << r.milliseconds << "\n";
}

// ---------------------------------------------------------------------------

inline nlohmann::json spec_to_json(const StageModelSpec& s) {
  return {{"stage", s.stage},
          {"channels", s.channels},
          {"measurement_dim", s.measurement_dim},
          {"filters", s.filters}};
}

inline StageModelSpec spec_from_json(const nlohmann::json& j) {
  StageModelSpec s;
  s.stage = j.at("stage").get<int>();
  s.channels = j.at("channels").get<int>();
  s.measurement_dim = j.at("measurement_dim").get<long>();
  s.filters = j.at("filters").get<long>();
  return s;
}

/// Loads a trained bundle from a run directory (stage<i>/weights.lpwt +
/// stage<i>/manifest.json as written by the trainer).
inline CascadeBundle load_bundle(const std::filesystem::path& run_dir) {
  CascadeBundle bundle;
  std::ifstream manifest_in(run_dir / "run.json");
  if (!manifest_in)
    throw std::runtime_error("bundle: missing run manifest " +
                             (run_dir / "run.json").string());
  nlohmann::json run = nlohmann::json::parse(manifest_in);
  auto& sc = bundle.sensing_cfg;
  sc.base_dim = run.at("sensing").at("base_dim").get<std::int64_t>();
  sc.beta = {run.at("sensing").at("beta_num").get<std::int64_t>(),
             run.at("sensing").at("beta_den").get<std::int64_t>()};
  sc.stages = run.at("sensing").at("stages").get<int>();
  sc.signal_dim = run.at("sensing").at("signal_dim").get<std::int64_t>();
  sc.channels = run.at("sensing").at("channels").get<int>();
  sc.seed = run.at("sensing").at("seed").get<std::uint64_t>();
  bundle.stage_dims = sc.stage_dims();
  for (auto d : bundle.stage_dims)
    bundle.cr_thresholds.push_back(static_cast<double>(sc.signal_dim) /
                                   static_cast<double>(d));

  const int k = sc.stages;
  for (int i = 1; i <= k; ++i) {
    auto dir = run_dir / ("stage" + std::to_string(i));
    std::ifstream min(dir / "manifest.json");
    if (!min) throw std::runtime_error("bundle: missing " + (dir / "manifest.json").string());
    nlohmann::json mj = nlohmann::json::parse(min);
    StageModelSpec spec = spec_from_json(mj.at("spec"));
    bundle.specs.push_back(spec);
    auto weights = nn::load_tensors(dir / "weights.lpwt");
    if (i == 1) {
      bundle.first = std::make_unique<RecGenFirst<float>>(spec);
      models::restore(models::full_state(*bundle.first), weights);
    } else {
      auto stage = std::make_unique<RecGenStage<float>>(spec);
      models::restore(models::full_state(*stage), weights);
      bundle.upper.push_back(std::move(stage));
    }
  }
  return bundle;
}

}  // namespace lapran::recon
