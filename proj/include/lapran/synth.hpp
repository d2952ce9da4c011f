#pragma once

// Procedural stand-in datasets for offline runs: digit-like grayscale strokes
// on a dark background and smooth textured color patches. Deterministic per
// (seed, index).

#include <opencv2/imgproc.hpp>

#include "lapran/image.hpp"

namespace lapran::synth {

/// Dark background, a handful of bright elliptical arcs and line strokes,
/// lightly blurred. Statistics resemble handwritten-digit scans.
inline ImageTensor digit_like(int side, std::uint64_t seed, long index) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1)));
  std::uniform_int_distribution<int> coord(side / 8, side - side / 8);
  std::uniform_int_distribution<int> axis(side / 10, side / 3);
  std::uniform_int_distribution<int> angle(0, 359);
  std::uniform_int_distribution<int> nshapes(2, 4);
  std::uniform_int_distribution<int> bright(180, 255);
  std::uniform_int_distribution<int> thick(std::max(1, side / 24), std::max(2, side / 12));

  cv::Mat m = cv::Mat::zeros(side, side, CV_8UC1);
  const int n = nshapes(rng);
  for (int i = 0; i < n; ++i) {
    const int kind = static_cast<int>(rng() % 2);
    const int b = bright(rng), t = thick(rng);
    if (kind == 0) {
      cv::ellipse(m, cv::Point(coord(rng), coord(rng)), cv::Size(axis(rng), axis(rng)),
                  angle(rng), 0, 360 - static_cast<double>(rng() % 180), cv::Scalar(b), t,
                  cv::LINE_AA);
    } else {
      cv::line(m, cv::Point(coord(rng), coord(rng)), cv::Point(coord(rng), coord(rng)),
               cv::Scalar(b), t, cv::LINE_AA);
    }
  }
  cv::GaussianBlur(m, m, cv::Size(3, 3), 0.8);
  return from_cv(m, 1, "synth:digit:" + std::to_string(index));
}

/// Smooth color gradients with a few filled shapes and mild blur; natural-image
/// statistics at small scale (low-frequency dominant).
inline ImageTensor texture_like(int side, std::uint64_t seed, long index) {
  Rng rng(seed ^ (0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(index + 1)));
  std::uniform_int_distribution<int> level(0, 255);
  std::uniform_int_distribution<int> coord(0, side - 1);
  std::uniform_int_distribution<int> radius(side / 8, side / 3);
  std::uniform_int_distribution<int> nshapes(2, 5);

  // Bilinear gradient base per channel.
  cv::Mat m(side, side, CV_8UC3);
  int c00[3], c01[3], c10[3], c11[3];
  for (int c = 0; c < 3; ++c) {
    c00[c] = level(rng);
    c01[c] = level(rng);
    c10[c] = level(rng);
    c11[c] = level(rng);
  }
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double fy = static_cast<double>(y) / (side - 1);
      const double fx = static_cast<double>(x) / (side - 1);
      cv::Vec3b px;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * c00[c] + fx * c01[c]) +
                         fy * ((1 - fx) * c10[c] + fx * c11[c]);
        px[c] = static_cast<std::uint8_t>(v);
      }
      m.at<cv::Vec3b>(y, x) = px;
    }
  const int n = nshapes(rng);
  for (int i = 0; i < n; ++i) {
    cv::Scalar color(level(rng), level(rng), level(rng));
    if (rng() % 2 == 0)
      cv::circle(m, cv::Point(coord(rng), coord(rng)), radius(rng), color, -1, cv::LINE_AA);
    else {
      cv::Point p(coord(rng), coord(rng));
      const int r = radius(rng);
      cv::rectangle(m, p, p + cv::Point(r, r), color, -1, cv::LINE_AA);
    }
  }
  cv::GaussianBlur(m, m, cv::Size(5, 5), 1.2);
  return from_cv(m, 3, "synth:texture:" + std::to_string(index));
}

inline std::vector<ImageTensor> digit_set(int count, int side, std::uint64_t seed) {
  std::vector<ImageTensor> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(digit_like(side, seed, i));
  return out;
}

inline std::vector<ImageTensor> texture_set(int count, int side, std::uint64_t seed) {
  std::vector<ImageTensor> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(texture_like(side, seed, i));
  return out;
}

}  // namespace lapran::synth
