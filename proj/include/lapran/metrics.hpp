#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapran/pyramid.hpp"

namespace lapran::metrics {

/// 8-bit-domain MSE between two [-1,1] images (de-normalized with
/// round-half-to-even so numbers match emitted PNGs).
inline double mse8(const ImageTensor& x, const ImageTensor& y) {
  if (x.data.shape != y.data.shape) throw std::invalid_argument("mse8: shape mismatch");
  double acc = 0;
  for (long i = 0; i < x.data.size(); ++i) {
    const double d = unit_to_pixel(x.data[i]) - unit_to_pixel(y.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.data.size());
}

/// Unit-domain MSE, the quantity tracked by training curves.
inline double mse_unit(const ImageTensor& x, const ImageTensor& y) {
  if (x.data.shape != y.data.shape) throw std::invalid_argument("mse: shape mismatch");
  double acc = 0;
  for (long i = 0; i < x.data.size(); ++i) {
    const double d = static_cast<double>(x.data[i]) - static_cast<double>(y.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.data.size());
}

/// 10*log10(peak^2/MSE) in dB; +infinity for identical images.
inline double psnr(const ImageTensor& x, const ImageTensor& y, double peak = 255.0) {
  const double m = mse8(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

namespace detail {

// Luma plane in the 8-bit domain.
inline std::vector<double> luma(const ImageTensor& img) {
  const int s = img.side();
  std::vector<double> out(static_cast<size_t>(s) * s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double v;
      if (img.channels() == 1)
        v = unit_to_pixel(img.at(0, y, x));
      else
        v = 0.299 * unit_to_pixel(img.at(0, y, x)) + 0.587 * unit_to_pixel(img.at(1, y, x)) +
            0.114 * unit_to_pixel(img.at(2, y, x));
      out[static_cast<size_t>(y) * s + x] = v;
    }
  return out;
}

}  // namespace detail

/// Mean local SSIM over Gaussian-weighted windows (valid positions only),
/// computed on luma for color inputs. Standard constants.
inline double ssim(const ImageTensor& xi, const ImageTensor& yi, int window = 11,
                   double sigma = 1.5, double k1 = 0.01, double k2 = 0.03,
                   double peak = 255.0) {
  if (xi.data.shape != yi.data.shape) throw std::invalid_argument("ssim: shape mismatch");
  const int s = xi.side();
  if (s < window) throw std::invalid_argument("ssim: image smaller than window");
  auto xl = detail::luma(xi), yl = detail::luma(yi);

  std::vector<double> w(static_cast<size_t>(window) * window);
  const int half = window / 2;
  double wsum = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(dy + half) * window + (dx + half)] = v;
      wsum += v;
    }
  for (auto& v : w) v /= wsum;

  const double c1 = (k1 * peak) * (k1 * peak), c2 = (k2 * peak) * (k2 * peak);
  double acc = 0;
  long count = 0;
  for (int cy = half; cy < s - half; ++cy)
    for (int cx = half; cx < s - half; ++cx) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double wv = w[static_cast<size_t>(dy + half) * window + (dx + half)];
          const double xv = xl[static_cast<size_t>(cy + dy) * s + (cx + dx)];
          const double yv = yl[static_cast<size_t>(cy + dy) * s + (cx + dx)];
          mx += wv * xv;
          my += wv * yv;
          sxx += wv * xv * xv;
          syy += wv * yv * yv;
          sxy += wv * xv * yv;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

struct StageScores {
  int stage = 0;
  double psnr_db = 0;  // mean over images; +inf collapses to the sentinel
  double ssim_val = std::numeric_limits<double>::quiet_NaN();  // NaN below window size
  double mse = 0;  // 8-bit domain
};

struct QualityReport {
  std::string dataset;
  double cr = 0;
  std::vector<StageScores> per_stage;
  StageScores final;
  long sample_count = 0;
  std::string config_hash;
  std::string ssim_mode = "luma";  // documented in every report header

  nlohmann::json to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : per_stage)
      stages.push_back({{"stage", s.stage},
                        {"psnr_db", s.psnr_db},
                        {"ssim", s.ssim_val},
                        {"mse", s.mse}});
    return {{"dataset", dataset},       {"cr", cr},
            {"per_stage", stages},      {"final_psnr_db", final.psnr_db},
            {"final_ssim", final.ssim_val}, {"final_mse", final.mse},
            {"sample_count", sample_count}, {"config_hash", config_hash},
            {"ssim_mode", ssim_mode}};
  }
};

inline void write_report_csv(const std::vector<QualityReport>& reports,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "# ssim_mode=luma psnr=8bit-mean-per-channel\n";
  out << "dataset,cr,stage,psnr_db,ssim,mse,samples,config_hash\n";
  for (const auto& r : reports)
    for (const auto& s : r.per_stage)
      out << r.dataset << "," << r.cr << "," << s.stage << "," << s.psnr_db << ","
          << s.ssim_val << "," << s.mse << "," << r.sample_count << "," << r.config_hash
          << "\n";
}

inline void write_report_json(const std::vector<QualityReport>& reports,
                              const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  std::ofstream out(path);
  out << arr.dump(2) << "\n";
}

/// Reconstructs every patch via the supplied callback and aggregates per-stage
/// means; the mean equals the mean of independently computed per-image metrics.
inline QualityReport evaluate(
    const std::string& dataset_name, double cr, const std::vector<ImagePyramid>& truth,
    const std::function<ImagePyramid(const ImagePyramid&)>& reconstruct_fn) {
  if (truth.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const int stages = truth.front().stages();
  QualityReport report;
  report.dataset = dataset_name;
  report.cr = cr;
  report.sample_count = static_cast<long>(truth.size());
  report.per_stage.resize(static_cast<size_t>(stages));
  std::vector<long> ssim_counts(static_cast<size_t>(stages), 0);
  for (int i = 0; i < stages; ++i) report.per_stage[static_cast<size_t>(i)].stage = i + 1;

  for (const auto& pyr : truth) {
    ImagePyramid rec = reconstruct_fn(pyr);
    for (int i = 0; i < std::min(stages, rec.stages()); ++i) {
      auto& s = report.per_stage[static_cast<size_t>(i)];
      s.mse += mse8(rec.level(i + 1), pyr.level(i + 1));
      s.psnr_db += psnr(rec.level(i + 1), pyr.level(i + 1));
      if (pyr.level(i + 1).side() >= 11) {
        s.ssim_val = (ssim_counts[static_cast<size_t>(i)] == 0 ? 0.0 : s.ssim_val) +
                     ssim(rec.level(i + 1), pyr.level(i + 1));
        ++ssim_counts[static_cast<size_t>(i)];
      }
    }
  }
  const double n = static_cast<double>(truth.size());
  for (int i = 0; i < stages; ++i) {
    auto& s = report.per_stage[static_cast<size_t>(i)];
    s.mse /= n;
    s.psnr_db /= n;
    if (ssim_counts[static_cast<size_t>(i)] > 0)
      s.ssim_val /= static_cast<double>(ssim_counts[static_cast<size_t>(i)]);
  }
  report.final = report.per_stage.back();
  return report;
}

}  // namespace lapran::metrics
