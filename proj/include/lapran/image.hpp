#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "lapran/tensor.hpp"

namespace lapran {

/// Square image in [-1,1], CHW layout, with source provenance for manifests.
struct ImageTensor {
  Tensorf data;  // [channels, side, side]
  std::string source;
  int crop_x = 0, crop_y = 0;

  int channels() const { return static_cast<int>(data.dim(0)); }
  int side() const { return static_cast<int>(data.dim(1)); }

  float& at(int c, int y, int x) {
    return data[(static_cast<long>(c) * side() + y) * side() + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<long>(c) * side() + y) * side() + x];
  }
};

inline float pixel_to_unit(float v) { return v / 127.5f - 1.0f; }

/// [-1,1] -> 8-bit with round-half-to-even, the de-normalization used for all
/// emitted images and 8-bit-domain metrics.
inline int unit_to_pixel(float v) {
  float scaled = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f;
  float r = std::nearbyintf(scaled);  // default FE_TONEAREST = half-to-even
  return static_cast<int>(std::clamp(r, 0.0f, 255.0f));
}

inline ImageTensor from_cv(const cv::Mat& m, int channels, const std::string& source = "") {
  cv::Mat img;
  if (channels == 1) {
    if (m.channels() == 3)
      cv::cvtColor(m, img, cv::COLOR_BGR2GRAY);
    else
      img = m;
  } else {
    if (m.channels() == 1)
      cv::cvtColor(m, img, cv::COLOR_GRAY2BGR);
    else
      img = m;
  }
  ImageTensor out;
  out.data = Tensorf({channels, img.rows, img.cols});
  out.source = source;
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) {
      if (channels == 1) {
        out.at(0, y, x) = pixel_to_unit(img.at<std::uint8_t>(y, x));
      } else {
        auto px = img.at<cv::Vec3b>(y, x);
        // BGR -> RGB
        out.at(0, y, x) = pixel_to_unit(px[2]);
        out.at(1, y, x) = pixel_to_unit(px[1]);
        out.at(2, y, x) = pixel_to_unit(px[0]);
      }
    }
  return out;
}

inline cv::Mat to_cv(const ImageTensor& img) {
  const int s = img.side();
  if (img.channels() == 1) {
    cv::Mat m(s, s, CV_8UC1);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(unit_to_pixel(img.at(0, y, x)));
    return m;
  }
  cv::Mat m(s, s, CV_8UC3);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      m.at<cv::Vec3b>(y, x) =
          cv::Vec3b(static_cast<std::uint8_t>(unit_to_pixel(img.at(2, y, x))),
                    static_cast<std::uint8_t>(unit_to_pixel(img.at(1, y, x))),
                    static_cast<std::uint8_t>(unit_to_pixel(img.at(0, y, x))));
  return m;
}

/// Gray <-> color conversion through the 8-bit domain.
inline ImageTensor to_channels(const ImageTensor& img, int channels) {
  if (img.channels() == channels) return img;
  ImageTensor out = from_cv(to_cv(img), channels, img.source);
  out.crop_x = img.crop_x;
  out.crop_y = img.crop_y;
  return out;
}

inline ImageTensor load_image(const std::filesystem::path& path, int channels,
                              int resize_to = 0) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("image: cannot read " + path.string());
  if (resize_to > 0 && (m.rows != resize_to || m.cols != resize_to))
    cv::resize(m, m, cv::Size(resize_to, resize_to), 0, 0, cv::INTER_CUBIC);
  return from_cv(m, channels, path.string());
}

inline void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_cv(img)))
    throw std::runtime_error("image: cannot write " + path.string());
}

}  // namespace lapran
