#include <gtest/gtest.h>

#include <cmath>

#include "lapran/metrics.hpp"

using namespace lapran;

namespace {

// Deterministic synthetic pairs mirrored by the external reference
// implementation that produced the frozen oracle values below.
ImageTensor gray_a() {
  ImageTensor img;
  img.data = Tensorf({1, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img.at(0, y, x) = pixel_to_unit(static_cast<float>((7 * x + 13 * y) % 256));
  return img;
}

ImageTensor gray_b() {
  ImageTensor img;
  img.data = Tensorf({1, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img.at(0, y, x) =
          pixel_to_unit(static_cast<float>((7 * x + 13 * y + (3 * x * y) % 11) % 256));
  return img;
}

ImageTensor color_a() {
  ImageTensor img;
  img.data = Tensorf({3, 64, 64});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        img.at(c, y, x) = pixel_to_unit(static_cast<float>((x * 3 + y * 5 + c * 17) % 256));
  return img;
}

ImageTensor color_b() {
  ImageTensor img;
  img.data = Tensorf({3, 64, 64});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const int base = (x * 3 + y * 5 + c * 17) % 256;
        img.at(c, y, x) = pixel_to_unit(static_cast<float>((base + (x + 2 * y + c) % 7) % 256));
      }
  return img;
}

}  // namespace

TEST(PixelDomain, EightBitRoundTripExact) {
  for (int v = 0; v <= 255; ++v)
    EXPECT_EQ(unit_to_pixel(pixel_to_unit(static_cast<float>(v))), v);
}

TEST(Psnr, FrozenExternalOracleGray) {
  // Reference values computed with an independent double-precision
  // implementation on the identical 8-bit patterns.
  EXPECT_NEAR(metrics::mse8(gray_a(), gray_b()), 1114.590820312500, 1e-6);
  EXPECT_NEAR(metrics::psnr(gray_a(), gray_b()), 17.659648989502, 1e-6);
}

TEST(Psnr, FrozenExternalOracleColor) {
  EXPECT_NEAR(metrics::mse8(color_a(), color_b()), 657.205566406250, 1e-6);
  EXPECT_NEAR(metrics::psnr(color_a(), color_b()), 19.953791276976, 1e-6);
}

TEST(Ssim, FrozenExternalOracles) {
  EXPECT_NEAR(metrics::ssim(gray_a(), gray_b()), 0.894795162042, 1e-4);
  EXPECT_NEAR(metrics::ssim(color_a(), color_b()), 0.908279466058, 1e-4);
}

TEST(Psnr, IdenticalImagesAreInfinity) {
  auto a = gray_a();
  EXPECT_TRUE(std::isinf(metrics::psnr(a, a)));
  EXPECT_GT(metrics::psnr(a, a), 0);
}

TEST(Psnr, UnitMseAtPeak255) {
  // Every pixel off by exactly 1 -> MSE 1 -> 20*log10(255) = 48.1308 dB.
  ImageTensor a, b;
  a.data = Tensorf({1, 16, 16});
  b.data = Tensorf({1, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      a.at(0, y, x) = pixel_to_unit(100.0f);
      b.at(0, y, x) = pixel_to_unit(101.0f);
    }
  EXPECT_NEAR(metrics::psnr(a, b), 20.0 * std::log10(255.0), 1e-9);
}

TEST(Psnr, ZeroDbAtFullRangeError) {
  ImageTensor black, white;
  black.data = Tensorf({1, 16, 16});
  white.data = Tensorf({1, 16, 16});
  black.data.data.setConstant(-1.0f);
  white.data.data.setConstant(1.0f);
  EXPECT_NEAR(metrics::psnr(black, white), 0.0, 1e-9);
}

TEST(Psnr, StrictlyDecreasingInMse) {
  auto base = gray_a();
  double prev = std::numeric_limits<double>::infinity();
  for (float noise : {0.01f, 0.05f, 0.2f}) {
    ImageTensor noisy = base;
    for (long i = 0; i < noisy.data.size(); ++i)
      noisy.data[i] = std::clamp(noisy.data[i] + noise, -1.0f, 1.0f);
    const double p = metrics::psnr(base, noisy);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, SelfSimilarityIsOne) {
  auto a = gray_a();
  EXPECT_NEAR(metrics::ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, Symmetric) {
  EXPECT_NEAR(metrics::ssim(gray_a(), gray_b()), metrics::ssim(gray_b(), gray_a()), 1e-12);
}

TEST(Ssim, InvertedContrastIsNegative) {
  // Zero-mean pattern against its negation: structure term flips sign.
  ImageTensor a, b;
  a.data = Tensorf({1, 16, 16});
  b.data = Tensorf({1, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const float v = 0.5f * static_cast<float>(std::sin(0.9 * x) * std::cos(1.1 * y));
      a.at(0, y, x) = v;
      b.at(0, y, x) = -v;
    }
  EXPECT_LT(metrics::ssim(a, b), 0.0);
}

TEST(Ssim, SmallerThanWindowRejected) {
  ImageTensor a;
  a.data = Tensorf({1, 8, 8});
  EXPECT_THROW(metrics::ssim(a, a), std::invalid_argument);
}

TEST(Evaluate, PerfectOracleBundle) {
  std::vector<ImagePyramid> truth;
  for (int i = 0; i < 3; ++i) {
    ImageTensor p;
    p.data = Tensorf({1, 32, 32});
    Rng rng(static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (long j = 0; j < p.data.size(); ++j) p.data[j] = dist(rng);
    truth.push_back(build_pyramid(p, 3));
  }
  auto report =
      metrics::evaluate("oracle", 10.0, truth, [](const ImagePyramid& p) { return p; });
  EXPECT_TRUE(std::isinf(report.final.psnr_db));
  EXPECT_NEAR(report.final.ssim_val, 1.0, 1e-12);
  EXPECT_NEAR(report.final.mse, 0.0, 1e-12);
  EXPECT_EQ(report.sample_count, 3);
  EXPECT_EQ(report.per_stage.size(), 3u);
}

TEST(Evaluate, AggregationEqualsPerImageMean) {
  std::vector<ImagePyramid> truth;
  std::vector<ImagePyramid> recon;
  Rng rng(55);
  std::uniform_real_distribution<float> dist(-0.9f, 0.9f);
  for (int i = 0; i < 5; ++i) {
    ImageTensor p, q;
    p.data = Tensorf({1, 16, 16});
    q.data = Tensorf({1, 16, 16});
    for (long j = 0; j < p.data.size(); ++j) {
      p.data[j] = dist(rng);
      q.data[j] = dist(rng);
    }
    truth.push_back(build_pyramid(p, 2));
    recon.push_back(build_pyramid(q, 2));
  }
  size_t next = 0;
  auto report = metrics::evaluate("agg", 1.0, truth,
                                  [&](const ImagePyramid&) { return recon[next++]; });
  // Brute-force per-image loop, independently averaged.
  for (int s = 1; s <= 2; ++s) {
    double mse = 0, psnr = 0;
    for (int i = 0; i < 5; ++i) {
      mse += metrics::mse8(recon[static_cast<size_t>(i)].level(s),
                           truth[static_cast<size_t>(i)].level(s));
      psnr += metrics::psnr(recon[static_cast<size_t>(i)].level(s),
                            truth[static_cast<size_t>(i)].level(s));
    }
    EXPECT_NEAR(report.per_stage[static_cast<size_t>(s - 1)].mse, mse / 5, 1e-9);
    EXPECT_NEAR(report.per_stage[static_cast<size_t>(s - 1)].psnr_db, psnr / 5, 1e-9);
  }
  // 8x8 level is below the SSIM window: sentinel NaN; 16x16 level has a value.
  EXPECT_TRUE(std::isnan(report.per_stage[0].ssim_val));
  EXPECT_FALSE(std::isnan(report.per_stage[1].ssim_val));
}

TEST(Evaluate, EmptyDatasetRejected) {
  EXPECT_THROW(metrics::evaluate("e", 1.0, {}, [](const ImagePyramid& p) { return p; }),
               std::invalid_argument);
}

TEST(Reports, CsvAndJsonWellFormed) {
  metrics::QualityReport r;
  r.dataset = "synthetic";
  r.cr = 10;
  r.sample_count = 2;
  metrics::StageScores s;
  s.stage = 1;
  s.psnr_db = 20.5;
  s.ssim_val = 0.9;
  s.mse = 123.4;
  r.per_stage = {s};
  r.final = s;
  r.config_hash = "cafe";
  const auto dir = std::filesystem::temp_directory_path();
  metrics::write_report_csv({r}, dir / "rep.csv");
  metrics::write_report_json({r}, dir / "rep.json");
  std::ifstream csv(dir / "rep.csv");
  std::string header, columns, row;
  std::getline(csv, header);
  std::getline(csv, columns);
  std::getline(csv, row);
  EXPECT_NE(header.find("ssim_mode=luma"), std::string::npos);
  EXPECT_EQ(columns, "dataset,cr,stage,psnr_db,ssim,mse,samples,config_hash");
  EXPECT_NE(row.find("cafe"), std::string::npos);
  std::ifstream js(dir / "rep.json");
  auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j[0]["ssim_mode"], "luma");
  EXPECT_EQ(j[0]["config_hash"], "cafe");
  std::filesystem::remove(dir / "rep.csv");
  std::filesystem::remove(dir / "rep.json");
}
