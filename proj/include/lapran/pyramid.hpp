#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapran/image.hpp"

namespace lapran {

/// Ground-truth (or reconstructed) images per stage, sides 8, 16, ..., 8*2^(k-1).
struct ImagePyramid {
  std::vector<ImageTensor> levels;

  int stages() const { return static_cast<int>(levels.size()); }
  const ImageTensor& level(int stage) const {  // 1-based
    return levels.at(static_cast<size_t>(stage - 1));
  }
};

inline std::vector<ImageTensor> extract_patches(const std::vector<ImageTensor>& images,
                                                int patch_side, int stride) {
  if (patch_side < 1 || stride < 1)
    throw std::invalid_argument("extract_patches: bad patch/stride");
  std::vector<ImageTensor> out;
  for (const auto& img : images) {
    const int s = img.side();
    if (patch_side > s) throw std::invalid_argument("extract_patches: patch larger than image");
    for (int oy = 0; oy + patch_side <= s; oy += stride)
      for (int ox = 0; ox + patch_side <= s; ox += stride) {
        ImageTensor p;
        p.data = Tensorf({img.channels(), patch_side, patch_side});
        p.source = img.source;
        p.crop_x = ox;
        p.crop_y = oy;
        for (int c = 0; c < img.channels(); ++c)
          for (int y = 0; y < patch_side; ++y)
            for (int x = 0; x < patch_side; ++x) p.at(c, y, x) = img.at(c, oy + y, ox + x);
        out.push_back(std::move(p));
      }
  }
  return out;
}

inline ImageTensor rotate90(const ImageTensor& img) {
  const int s = img.side();
  ImageTensor out = img;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) out.at(c, x, s - 1 - y) = img.at(c, y, x);
  return out;
}

inline ImageTensor flip_horizontal(const ImageTensor& img) {
  const int s = img.side();
  ImageTensor out = img;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) out.at(c, y, s - 1 - x) = img.at(c, y, x);
  return out;
}

/// Rotations first, then the flipped copies, in a fixed order.
inline std::vector<ImageTensor> augment(const ImageTensor& patch, bool rotations,
                                        bool flips) {
  std::vector<ImageTensor> base{patch};
  if (rotations) {
    ImageTensor r = patch;
    for (int i = 0; i < 3; ++i) {
      r = rotate90(r);
      base.push_back(r);
    }
  }
  std::vector<ImageTensor> out = base;
  if (flips)
    for (const auto& b : base) out.push_back(flip_horizontal(b));
  return out;
}

/// 2x2 area-average downsample.
inline ImageTensor downsample2(const ImageTensor& img) {
  const int s = img.side();
  if (s % 2 != 0) throw std::invalid_argument("downsample2: odd side");
  ImageTensor out;
  out.data = Tensorf({img.channels(), s / 2, s / 2});
  out.source = img.source;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < s / 2; ++y)
      for (int x = 0; x < s / 2; ++x)
        out.at(c, y, x) = 0.25f * (img.at(c, 2 * y, 2 * x) + img.at(c, 2 * y, 2 * x + 1) +
                                   img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1));
  return out;
}

inline ImagePyramid build_pyramid(const ImageTensor& patch, int stages) {
  int expect = 8 << (stages - 1);
  if (patch.side() != expect)
    throw std::invalid_argument("build_pyramid: patch side must be 8*2^(k-1)");
  ImagePyramid pyr;
  pyr.levels.resize(static_cast<size_t>(stages));
  pyr.levels[static_cast<size_t>(stages - 1)] = patch;
  for (int i = stages - 2; i >= 0; --i)
    pyr.levels[static_cast<size_t>(i)] = downsample2(pyr.levels[static_cast<size_t>(i + 1)]);
  return pyr;
}

struct DatasetManifest {
  std::string name;
  std::string split;  // train | val | test
  std::vector<std::string> sources;
  std::int64_t patch_count = 0;
  bool augment_rotations = false;
  bool augment_flips = false;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"name", name},         {"split", split},
            {"sources", sources},   {"patch_count", patch_count},
            {"augment_rotations", augment_rotations},
            {"augment_flips", augment_flips},
            {"seed", seed}};
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << to_json().dump(2) << "\n";
  }
};

/// Source-image-level split; no patch of one source lands in two splits.
inline std::array<DatasetManifest, 3> split_dataset(const std::string& name,
                                                    std::vector<std::string> sources,
                                                    double train_ratio, double val_ratio,
                                                    double test_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
    throw std::invalid_argument("split_dataset: negative ratio");
  double sum = train_ratio + val_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split_dataset: ratios must sum to 1");
  Rng rng(seed);
  std::shuffle(sources.begin(), sources.end(), rng);
  const auto n = static_cast<std::int64_t>(sources.size());
  auto n_train = static_cast<std::int64_t>(std::llround(train_ratio * static_cast<double>(n)));
  auto n_val = static_cast<std::int64_t>(std::llround(val_ratio * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  std::array<DatasetManifest, 3> out;
  const char* splits[3] = {"train", "val", "test"};
  std::int64_t bounds[4] = {0, n_train, n_train + n_val, n};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<size_t>(i)].name = name;
    out[static_cast<size_t>(i)].split = splits[i];
    out[static_cast<size_t>(i)].seed = seed;
    out[static_cast<size_t>(i)].sources.assign(sources.begin() + bounds[i],
                                               sources.begin() + bounds[i + 1]);
  }
  return out;
}

/// Loads every readable image in a directory, sorted by filename.
inline std::vector<ImageTensor> load_directory(const std::filesystem::path& dir,
                                               int channels, int resize_to = 0) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> out;
  for (const auto& f : files) out.push_back(load_image(f, channels, resize_to));
  return out;
}

}  // namespace lapran
