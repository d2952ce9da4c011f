#include <gtest/gtest.h>

#include <algorithm>

#include "lapran/models.hpp"

using namespace lapran;

namespace {

models::StageModelSpec spec_for(int stage, long mdim, int channels = 1, long filters = 4) {
  models::StageModelSpec s;
  s.stage = stage;
  s.channels = channels;
  s.measurement_dim = mdim;
  s.filters = filters;
  return s;
}

long count_marker(const std::vector<std::string>& v, const std::string& m) {
  return std::count(v.begin(), v.end(), m);
}

}  // namespace

TEST(StageSpec, SideGeometry) {
  EXPECT_EQ(spec_for(1, 8).output_side(), 8);
  EXPECT_EQ(spec_for(2, 8).output_side(), 16);
  EXPECT_EQ(spec_for(4, 8).output_side(), 64);
  EXPECT_EQ(spec_for(2, 8).input_side(), 8);
  EXPECT_EQ(spec_for(4, 8).input_side(), 32);
  EXPECT_THROW(spec_for(1, 8).input_side(), std::logic_error);
}

TEST(StageSpec, LatentDimScalesWithChannels) {
  EXPECT_EQ(spec_for(2, 10, 3).latent_dim(), 30);
  EXPECT_EQ(spec_for(2, 10, 1).latent_dim(), 10);
}

TEST(Fuse, ContextFirstThenMeasurements) {
  Tensorf c({2, 3}), y({2, 3});
  c.data << 1, 2, 3, 4, 5, 6;
  y.data << 10, 20, 30, 40, 50, 60;
  Tensorf f = models::fuse(c, y);
  ASSERT_EQ(f.shape, (std::vector<long>{2, 6}));
  const float want[] = {1, 2, 3, 10, 20, 30, 4, 5, 6, 40, 50, 60};
  for (long i = 0; i < 12; ++i) EXPECT_FLOAT_EQ(f.data[i], want[i]);
}

TEST(Fuse, LengthMismatchRejected) {
  EXPECT_THROW(models::fuse(Tensorf({1, 3}), Tensorf({1, 4})), std::invalid_argument);
}

TEST(GenFirst, ShapeAndRange) {
  auto spec = spec_for(1, 12, 3);
  models::RecGenFirst<float> gen(spec);
  Rng rng(1);
  gen.init(rng);
  Tensorf y = randn<float>({5, spec.latent_dim()}, rng);
  Tensorf out = gen.forward(y, false);
  EXPECT_EQ(out.shape, (std::vector<long>{5, 3, 8, 8}));
  for (long i = 0; i < out.size(); ++i) {
    EXPECT_GE(out.data[i], -1.0f);
    EXPECT_LE(out.data[i], 1.0f);
  }
  EXPECT_THROW(gen.forward(Tensorf({5, spec.latent_dim() + 1}), false),
               std::invalid_argument);
}

TEST(GenFirst, InputGradMatchesFiniteDifference) {
  auto spec = spec_for(1, 6);
  models::RecGenFirst<double> gen(spec);
  Rng rng(2);
  gen.init(rng);
  Tensord y = randn<double>({2, 6}, rng);
  Tensord out = gen.forward(y, true);
  Tensord w = randn<double>(out.shape, rng);
  Tensord gy = gen.backward(w);
  const double h = 1e-6;
  for (long i = 0; i < y.size(); ++i) {
    Tensord yp = y, ym = y;
    yp.data[i] += h;
    ym.data[i] -= h;
    const double fd =
        (gen.forward(yp, true).data.dot(w.data) - gen.forward(ym, true).data.dot(w.data)) /
        (2 * h);
    EXPECT_NEAR(gy.data[i], fd, 1e-6) << "coord " << i;
  }
}

TEST(GenStage, OutputIsClampedSumOfBranches) {
  auto spec = spec_for(2, 10);
  models::RecGenStage<float> gen(spec);
  Rng rng(3);
  gen.init(rng);
  Tensorf prev = randn<float>({3, 1, 8, 8}, rng, 0.5f);
  Tensorf y = randn<float>({3, spec.latent_dim()}, rng);
  auto out = gen.forward(prev, y, false);
  EXPECT_EQ(out.output.shape, (std::vector<long>{3, 1, 16, 16}));
  EXPECT_EQ(out.upscaled.shape, out.output.shape);
  EXPECT_EQ(out.residual.shape, out.output.shape);
  for (long i = 0; i < out.output.size(); ++i) {
    const float pre = out.upscaled.data[i] + out.residual.data[i];
    EXPECT_EQ(out.output.data[i], std::clamp(pre, -1.0f, 1.0f));  // bitwise
  }
}

TEST(GenStage, ClampActuallySaturates) {
  auto spec = spec_for(2, 6);
  models::RecGenStage<float> gen(spec);
  Rng rng(4);
  gen.init(rng);
  // Inflate the residual head bias so the pre-activation leaves [-1,1].
  for (auto* p : gen.params())
    if (p->name == "gen.to_image.b") p->value.setConstant(5.0f);
  Tensorf prev = randn<float>({1, 1, 8, 8}, rng, 0.3f);
  Tensorf y = randn<float>({1, spec.latent_dim()}, rng);
  auto out = gen.forward(prev, y, false);
  long saturated = 0;
  for (long i = 0; i < out.output.size(); ++i) {
    const float pre = out.upscaled.data[i] + out.residual.data[i];
    EXPECT_EQ(out.output.data[i], std::clamp(pre, -1.0f, 1.0f));
    if (pre > 1.0f) ++saturated;
  }
  EXPECT_GT(saturated, 0);
}

TEST(GenStage, StructureHasThreeResBlocksAndNormalization) {
  models::RecGenStage<float> gen(spec_for(3, 10));
  auto desc = gen.structure();
  EXPECT_EQ(count_marker(desc, "resblock["), 3);
  EXPECT_EQ(count_marker(desc, "]resblock"), 3);
  EXPECT_EQ(count_marker(desc, "deconv"), 2);  // decode upsample + upper branch
  EXPECT_GE(count_marker(desc, "batchnorm"), 4);
  // The upper branch ends in a bounded activation.
  EXPECT_EQ(desc.back(), "tanh");
}

TEST(GenStage, FusionDisabledIgnoresMeasurements) {
  auto spec = spec_for(2, 8);
  models::RecGenStage<float> gen(spec, /*fusion_enabled=*/false);
  Rng rng(5);
  gen.init(rng);
  Tensorf prev = randn<float>({2, 1, 8, 8}, rng, 0.4f);
  Tensorf y1 = randn<float>({2, spec.latent_dim()}, rng);
  Tensorf y2 = randn<float>({2, spec.latent_dim()}, rng);
  auto o1 = gen.forward(prev, y1, false);
  auto o2 = gen.forward(prev, y2, false);
  EXPECT_TRUE((o1.output.data.array() == o2.output.data.array()).all());
  EXPECT_FALSE(gen.fusion_enabled());
}

TEST(GenStage, FusionEnabledUsesMeasurements) {
  auto spec = spec_for(2, 8);
  models::RecGenStage<float> gen(spec);
  Rng rng(6);
  gen.init(rng);
  Tensorf prev = randn<float>({2, 1, 8, 8}, rng, 0.4f);
  Tensorf y1 = randn<float>({2, spec.latent_dim()}, rng);
  Tensorf y2 = randn<float>({2, spec.latent_dim()}, rng);
  auto o1 = gen.forward(prev, y1, false);
  auto o2 = gen.forward(prev, y2, false);
  EXPECT_FALSE((o1.output.data.array() == o2.output.data.array()).all());
}

TEST(GenStage, BadInputsRejected) {
  auto spec = spec_for(2, 8);
  models::RecGenStage<float> gen(spec);
  Rng rng(7);
  gen.init(rng);
  EXPECT_THROW(gen.forward(Tensorf({1, 1, 16, 16}), Tensorf({1, 8}), false),
               std::invalid_argument);
  EXPECT_THROW(gen.forward(Tensorf({1, 1, 8, 8}), Tensorf({1, 9}), false),
               std::invalid_argument);
  EXPECT_THROW(models::RecGenStage<float>(spec_for(1, 8)), std::invalid_argument);
}

TEST(Disc, ProbabilityOutputShapeAndRange) {
  models::RecDisc<float> disc(spec_for(3, 10, 3, 8));
  Rng rng(8);
  disc.init(rng);
  Tensorf x = randn<float>({4, 3, 32, 32}, rng, 0.5f);
  Tensorf p = disc.forward(x, false);
  EXPECT_EQ(p.shape, (std::vector<long>{4, 1}));
  for (long i = 0; i < 4; ++i) {
    EXPECT_GT(p.data[i], 0.0f);
    EXPECT_LT(p.data[i], 1.0f);
  }
  EXPECT_THROW(disc.forward(Tensorf({1, 3, 16, 16}), false), std::invalid_argument);
}

TEST(Disc, ZeroWeightsGiveExactlyHalf) {
  models::RecDisc<float> disc(spec_for(2, 10, 1, 4));
  for (auto* p : disc.params()) p->value.setZero();
  Tensorf x = Tensorf({2, 1, 16, 16});
  x.data.setConstant(0.7f);
  Tensorf p = disc.forward(x, false);
  EXPECT_FLOAT_EQ(p.data[0], 0.5f);
  EXPECT_FLOAT_EQ(p.data[1], 0.5f);
}

TEST(Disc, FirstConvHasNoNormalization) {
  // 64x64 input: four stride-2 convs down to 4x4; normalization on all but
  // the first, leaky rectification throughout, sigmoid head.
  models::RecDisc<float> disc(spec_for(4, 10, 1, 8));
  auto desc = disc.structure();
  EXPECT_EQ(count_marker(desc, "conv"), 4);
  EXPECT_EQ(count_marker(desc, "batchnorm"), 3);
  EXPECT_EQ(count_marker(desc, "leaky_relu"), 4);
  EXPECT_EQ(desc.back(), "sigmoid");
  // The first two entries are conv then leaky (no norm between them).
  EXPECT_EQ(desc[0], "conv");
  EXPECT_EQ(desc[1], "leaky_relu");
}

TEST(Weights, SnapshotRestoreRoundTrip) {
  auto spec = spec_for(2, 8);
  models::RecGenStage<float> a(spec), b(spec);
  Rng r1(9), r2(10);
  a.init(r1);
  b.init(r2);
  auto snap = models::snapshot<float>(models::full_state(a));
  models::restore<float>(models::full_state(b), snap);
  auto pa = models::full_state(a);
  auto pb = models::full_state(b);
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    EXPECT_TRUE((pa[i]->value.array() == pb[i]->value.array()).all()) << pa[i]->name;
}

TEST(Weights, TransferIdenticalSpecCopiesEverything) {
  auto spec = spec_for(2, 8);
  models::RecGenStage<float> src(spec), dst(spec);
  Rng r1(11), r2(12);
  src.init(r1);
  dst.init(r2);
  auto report =
      models::transfer_weights<float>(models::snapshot<float>(src.params()), dst.params());
  EXPECT_TRUE(report.fresh.empty());
  EXPECT_EQ(report.copied.size(), src.params().size());
  auto ps = src.params();
  auto pd = dst.params();
  for (size_t i = 0; i < ps.size(); ++i)
    EXPECT_TRUE((ps[i]->value.array() == pd[i]->value.array()).all());
}

TEST(Weights, TransferAcrossStagesKeepsResolutionFreeTensors) {
  // Stage 2 -> stage 3 with the same filter count: only the two dense layers
  // whose sizes track the stage resolution (contextual encoder head and the
  // fusion expansion) must be re-initialized.
  models::RecGenStage<float> src(spec_for(2, 20, 1, 8));
  models::RecGenStage<float> dst(spec_for(3, 40, 1, 8));
  Rng r1(13), r2(14);
  src.init(r1);
  dst.init(r2);
  auto report =
      models::transfer_weights<float>(models::snapshot<float>(src.params()), dst.params());
  std::sort(report.fresh.begin(), report.fresh.end());
  const std::vector<std::string> want_fresh = {"gen.enc_fc.b", "gen.enc_fc.w",
                                               "gen.fuse_fc.b", "gen.fuse_fc.w"};
  EXPECT_EQ(report.fresh, want_fresh);
  EXPECT_EQ(report.copied.size() + report.fresh.size(), dst.params().size());
}

TEST(Weights, TransferNoOverlapLeavesAllFresh) {
  models::RecGenFirst<float> dst(spec_for(1, 8));
  Rng rng(15);
  dst.init(rng);
  auto before = models::snapshot<float>(dst.params());
  nn::NamedTensors empty;
  auto report = models::transfer_weights<float>(empty, dst.params());
  EXPECT_TRUE(report.copied.empty());
  EXPECT_EQ(report.fresh.size(), dst.params().size());
  for (auto* p : dst.params())
    EXPECT_TRUE((p->value.array() == before.get(p->name).data.array()).all());
}

TEST(Weights, RestoreShapeMismatchRejected) {
  models::RecGenFirst<float> gen(spec_for(1, 8));
  auto snap = models::snapshot<float>(gen.params());
  models::RecGenFirst<float> other(spec_for(1, 9));
  EXPECT_THROW(models::restore<float>(other.params(), snap), std::runtime_error);
}
