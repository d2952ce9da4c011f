#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lapran/nn/adam.hpp"
#include "lapran/nn/layers.hpp"
#include "lapran/nn/serialize.hpp"

using namespace lapran;

namespace {

// Central-difference check of a layer's input and parameter gradients in
// double precision. The scalar objective is sum(y .* w) for fixed random w,
// whose upstream gradient is simply w.
void gradcheck(nn::Layer<double>& layer, Tensord x, double tol = 1e-7,
               long input_step = 1, long param_step = 1) {
  Rng rng(99);
  Tensord y = layer.forward(x, true);
  Tensord w = randn<double>(y.shape, rng);
  for (auto* p : layer.params()) p->grad.setZero();
  Tensord gx = layer.backward(w);
  const double h = 1e-6;

  auto objective = [&](const Tensord& xin) {
    Tensord out = layer.forward(xin, true);
    return out.data.dot(w.data);
  };

  for (long i = 0; i < x.size(); i += input_step) {
    Tensord xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (objective(xp) - objective(xm)) / (2 * h);
    EXPECT_NEAR(gx.data[i], fd, tol) << "input coord " << i;
  }

  for (auto* p : layer.params()) {
    for (long i = 0; i < p->size(); i += param_step) {
      const double save = p->value[i];
      p->value[i] = save + h;
      const double fp = objective(x);
      p->value[i] = save - h;
      const double fm = objective(x);
      p->value[i] = save;
      EXPECT_NEAR(p->grad[i], (fp - fm) / (2 * h), tol)
          << p->name << " coord " << i;
    }
  }
  // Restore forward caches to the unperturbed point.
  layer.forward(x, true);
}

}  // namespace

TEST(DenseLayer, GradCheck) {
  Rng rng(1);
  nn::Dense<double> layer(6, 4);
  layer.init(rng);
  gradcheck(layer, randn<double>({3, 6}, rng));
}

TEST(DenseLayer, ForwardOracle) {
  nn::Dense<double> layer(2, 2);
  // w is stored row-major [out,in]: y0 = 1*x0 + 2*x1 + b0, y1 = 3*x0 + 4*x1 + b1
  layer.w_.value << 1, 2, 3, 4;
  layer.b_.value << 10, 20;
  Tensord x({1, 2});
  x.data << 0.5, -1.0;
  Tensord y = layer.forward(x, false);
  EXPECT_NEAR(y.data[0], 1 * 0.5 + 2 * -1.0 + 10, 1e-12);
  EXPECT_NEAR(y.data[1], 3 * 0.5 + 4 * -1.0 + 20, 1e-12);
}

TEST(ConvLayer, GradCheck) {
  Rng rng(2);
  nn::Conv2<double> layer(2, 3, 3, 1, 1);
  layer.init(rng);
  gradcheck(layer, randn<double>({2, 2, 5, 5}, rng), 1e-6, 3, 3);
}

TEST(ConvLayer, StridedGradCheck) {
  Rng rng(3);
  nn::Conv2<double> layer(1, 2, 4, 2, 1);
  layer.init(rng);
  gradcheck(layer, randn<double>({1, 1, 8, 8}, rng), 1e-6, 2, 2);
}

TEST(ConvLayer, IdentityKernelOracle) {
  nn::Conv2<double> layer(1, 1, 3, 1, 1);
  layer.w_.value.setZero();
  layer.w_.value[4] = 1.0;  // center tap
  layer.b_.value.setZero();
  Rng rng(4);
  Tensord x = randn<double>({1, 1, 6, 6}, rng);
  Tensord y = layer.forward(x, false);
  for (long i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.data[i], x.data[i]);
}

TEST(DeconvLayer, DoublesSideExactly) {
  nn::Deconv2<double> layer(3, 2, 4, 2, 1);
  EXPECT_EQ(layer.out_side(8), 16);
  EXPECT_EQ(layer.out_side(32), 64);
  Rng rng(5);
  layer.init(rng);
  Tensord y = layer.forward(randn<double>({2, 3, 8, 8}, rng), false);
  EXPECT_EQ(y.shape, (std::vector<long>{2, 2, 16, 16}));
}

TEST(DeconvLayer, GradCheck) {
  Rng rng(6);
  nn::Deconv2<double> layer(2, 2, 4, 2, 1);
  layer.init(rng);
  gradcheck(layer, randn<double>({1, 2, 4, 4}, rng), 1e-6, 2, 2);
}

TEST(DeconvLayer, AdjointOfConv) {
  // <conv(x), y> == <x, deconv(y)> when deconv shares conv's kernel and both
  // biases are zero: transposed convolution is the adjoint map.
  Rng rng(7);
  nn::Conv2<double> conv(2, 3, 4, 2, 1);
  conv.init(rng);
  conv.b_.value.setZero();
  nn::Deconv2<double> deconv(3, 2, 4, 2, 1);
  deconv.w_.value = conv.w_.value;  // both store [3,2,4,4]-compatible layouts
  deconv.b_.value.setZero();
  Tensord x = randn<double>({1, 2, 8, 8}, rng);
  Tensord y = randn<double>({1, 3, 4, 4}, rng);
  const double lhs = conv.forward(x, false).data.dot(y.data);
  const double rhs = x.data.dot(deconv.forward(y, false).data);
  EXPECT_NEAR(lhs, rhs, 1e-9);
}

TEST(BatchNorm, NormalizesTrainingBatch) {
  nn::BatchNorm2<double> bn(2);
  Rng rng(8);
  Tensord x = randn<double>({4, 2, 3, 3}, rng);
  x.data.array() = x.data.array() * 3.0 + 1.5;  // non-trivial mean/scale
  Tensord y = bn.forward(x, true);
  const long HW = 9, B = 4;
  for (long c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    for (long b = 0; b < B; ++b)
      for (long i = 0; i < HW; ++i) {
        const double v = y.data[(b * 2 + c) * HW + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / (B * HW);
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(sq / (B * HW) - mean * mean, 1.0, 1e-4);  // up to eps
  }
}

TEST(BatchNorm, GradCheck) {
  Rng rng(9);
  nn::BatchNorm2<double> bn(2);
  bn.init(rng);
  // Non-unit gamma/beta so their gradients are exercised off the init point.
  bn.gamma_.value << 1.3, 0.7;
  bn.beta_.value << -0.2, 0.4;
  gradcheck(bn, randn<double>({3, 2, 2, 2}, rng), 1e-6);
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  nn::BatchNorm2<double> bn(1, 0.5);
  Tensord x({2, 1, 1, 2});
  x.data << 1, 3, 5, 7;  // batch mean 4, variance 5
  bn.forward(x, true);
  EXPECT_NEAR(bn.rm_.value[0], 0.5 * 4.0, 1e-12);       // (1-m)*0 + m*mean
  EXPECT_NEAR(bn.rv_.value[0], 0.5 * 1 + 0.5 * 5, 1e-12);
  Tensord probe({1, 1, 1, 1});
  probe.data << 2.0;
  Tensord out = bn.forward(probe, false);
  EXPECT_NEAR(out.data[0], (2.0 - 2.0) / std::sqrt(3.0 + 1e-5), 1e-9);
}

TEST(Activations, GradChecks) {
  Rng rng(10);
  nn::ReLU<double> relu;
  gradcheck(relu, randn<double>({2, 8}, rng));
  nn::LeakyReLU<double> lrelu(0.2);
  gradcheck(lrelu, randn<double>({2, 8}, rng));
  nn::Tanh<double> tanh_l;
  gradcheck(tanh_l, randn<double>({2, 8}, rng));
  nn::Sigmoid<double> sig;
  gradcheck(sig, randn<double>({2, 8}, rng));
}

TEST(Activations, PointwiseOracles) {
  Tensord x({1, 3});
  x.data << -2.0, 0.0, 3.0;
  nn::ReLU<double> relu;
  Tensord yr = relu.forward(x, false);
  EXPECT_DOUBLE_EQ(yr.data[0], 0.0);
  EXPECT_DOUBLE_EQ(yr.data[2], 3.0);
  nn::LeakyReLU<double> lrelu(0.2);
  Tensord yl = lrelu.forward(x, false);
  EXPECT_DOUBLE_EQ(yl.data[0], -0.4);
  nn::Sigmoid<double> sig;
  Tensord ys = sig.forward(x, false);
  EXPECT_NEAR(ys.data[1], 0.5, 1e-12);
  nn::Tanh<double> th;
  Tensord yt = th.forward(x, false);
  EXPECT_NEAR(yt.data[2], std::tanh(3.0), 1e-12);
}

TEST(ResBlockLayer, GradCheck) {
  Rng rng(11);
  nn::ResBlock<double> block(2);
  block.init(rng);
  gradcheck(block, randn<double>({2, 2, 3, 3}, rng), 1e-5, 3, 7);
}

TEST(ResBlockLayer, DescribeHasMarkers) {
  nn::ResBlock<float> block(4);
  std::vector<std::string> desc;
  block.describe(desc);
  EXPECT_EQ(desc.front(), "resblock[");
  EXPECT_EQ(desc.back(), "]resblock");
  EXPECT_EQ(std::count(desc.begin(), desc.end(), "conv"), 2);
  EXPECT_EQ(std::count(desc.begin(), desc.end(), "batchnorm"), 2);
}

TEST(SequentialLayer, ComposesAndGradChecks) {
  Rng rng(12);
  nn::Sequential<double> seq;
  seq.add<nn::Dense<double>>("fc1", 4, 6);
  seq.add<nn::Tanh<double>>("act");
  seq.add<nn::Dense<double>>("fc2", 6, 2);
  seq.init(rng);
  gradcheck(seq, randn<double>({3, 4}, rng));
}

TEST(SequentialLayer, NameParamsConventions) {
  nn::Sequential<float> seq;
  seq.add<nn::Conv2<float>>("conv0", 1, 2, 3, 1, 1);
  seq.add<nn::BatchNorm2<float>>("bn0", 2);
  auto& inner = seq.add<nn::Sequential<float>>("head");
  inner.add<nn::Dense<float>>("fc", 8, 4);
  seq.name_params("disc.");
  auto ps = seq.params();
  ASSERT_EQ(ps.size(), 6u);
  EXPECT_EQ(ps[0]->name, "disc.conv0.w");
  EXPECT_EQ(ps[1]->name, "disc.conv0.b");
  EXPECT_EQ(ps[2]->name, "disc.bn0.w");  // gamma/beta take the generic slots
  EXPECT_EQ(ps[3]->name, "disc.bn0.b");
  EXPECT_EQ(ps[4]->name, "disc.head.fc.w");
  EXPECT_EQ(ps[5]->name, "disc.head.fc.b");
  auto bs = seq.buffers();
  ASSERT_EQ(bs.size(), 2u);
  EXPECT_EQ(bs[0]->name, "disc.bn0.buf0");
  EXPECT_EQ(bs[1]->name, "disc.bn0.buf1");
}

TEST(AdamOptimizer, HandComputedFirstStep) {
  nn::Param<double> p;
  p.alloc({1});
  p.value[0] = 1.0;
  p.grad[0] = 0.5;
  nn::AdamConfig<double> cfg;
  cfg.lr = 1e-4;
  nn::Adam<double> opt({&p}, cfg);
  opt.step();
  // m = 0.1*0.5 = 0.05, m_hat = 0.05/0.1 = 0.5
  // v = 0.001*0.25 = 2.5e-4, v_hat = 0.25, sqrt = 0.5
  // w <- 1 - 1e-4 * 0.5 / (0.5 + 1e-8)
  const double expected = 1.0 - 1e-4 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.value[0], expected, 1e-15);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamOptimizer, TwoStepsMatchReference) {
  nn::Param<double> p;
  p.alloc({1});
  p.value[0] = 2.0;
  nn::AdamConfig<double> cfg;
  cfg.lr = 0.01;
  nn::Adam<double> opt({&p}, cfg);
  // Reference recurrence computed independently alongside.
  double w = 2.0, m = 0, v = 0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 2; ++t) {
    const double g = 0.3 * t;  // deterministic gradient schedule
    p.grad[0] = g;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w -= 0.01 * mh / (std::sqrt(vh) + eps);
    opt.step();
    EXPECT_NEAR(p.value[0], w, 1e-14) << "step " << t;
  }
}

TEST(AdamOptimizer, ZeroGradClearsAccumulation) {
  nn::Param<double> p;
  p.alloc({3});
  p.grad.setConstant(7.0);
  nn::Adam<double> opt({&p}, {});
  opt.zero_grad();
  EXPECT_EQ(p.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AdamOptimizer, ConvergesOnQuadratic) {
  nn::Param<double> p;
  p.alloc({1});
  p.value[0] = 5.0;
  nn::AdamConfig<double> cfg;
  cfg.lr = 0.1;
  nn::Adam<double> opt({&p}, cfg);
  for (int i = 0; i < 500; ++i) {
    p.grad[0] = 2.0 * (p.value[0] - 3.0);  // d/dw (w-3)^2
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 3.0, 1e-3);
}

TEST(Serialize, RoundTripBitExact) {
  nn::NamedTensors t;
  Rng rng(13);
  Tensorf a = randn<float>({3, 4}, rng);
  Tensorf b = randn<float>({2, 1, 5, 5}, rng);
  t.put("alpha.w", a.shape, a.data);
  t.put("beta.b", b.shape, b.data);
  const auto path = std::filesystem::temp_directory_path() / "nn_roundtrip.lpwt";
  nn::save_tensors(t, path);
  auto back = nn::load_tensors(path);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.get("alpha.w").shape, a.shape);
  EXPECT_TRUE((back.get("alpha.w").data.array() == a.data.array()).all());
  EXPECT_TRUE((back.get("beta.b").data.array() == b.data.array()).all());
  EXPECT_FALSE(back.has("gamma"));
  EXPECT_THROW(back.get("gamma"), std::out_of_range);
  std::filesystem::remove(path);
}

TEST(Serialize, CorruptAndMissingFilesRejected) {
  const auto path = std::filesystem::temp_directory_path() / "nn_corrupt.lpwt";
  std::ofstream(path, std::ios::binary) << "XXXX0000";
  EXPECT_THROW(nn::load_tensors(path), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_THROW(nn::load_tensors("/nonexistent/x.lpwt"), std::runtime_error);
}

TEST(Serialize, CanonicalOrderIsDeterministic) {
  nn::NamedTensors t;
  Tensorf v({2});
  v.data << 1.0f, 2.0f;
  // Insert in reverse lexical order; the ordered map canonicalizes it.
  t.put("z.w", v.shape, v.data);
  t.put("a.w", v.shape, v.data);
  const auto dir = std::filesystem::temp_directory_path();
  nn::save_tensors(t, dir / "c1.lpwt");
  nn::NamedTensors t2;
  t2.put("a.w", v.shape, v.data);
  t2.put("z.w", v.shape, v.data);
  nn::save_tensors(t2, dir / "c2.lpwt");
  std::ifstream f1(dir / "c1.lpwt", std::ios::binary), f2(dir / "c2.lpwt", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  std::filesystem::remove(dir / "c1.lpwt");
  std::filesystem::remove(dir / "c2.lpwt");
}
