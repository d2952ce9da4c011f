#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapran/nn/layers.hpp"
#include "lapran/nn/serialize.hpp"

namespace lapran::models {

using nn::Param;

/// Layer hyperparameters of one pyramid stage. Stage 1 decodes measurements
/// alone; stages >= 2 consume the previous stage's output as context.
struct StageModelSpec {
  int stage = 1;
  int channels = 1;
  long measurement_dim = 128;  // per channel
  long filters = 64;
  int kernel = 3;

  int output_side() const { return 8 << (stage - 1); }
  int input_side() const {
    if (stage < 2) throw std::logic_error("stage 1 has no image input");
    return 8 << (stage - 2);
  }
  /// Contextual latent length; matches the concatenated measurement vector.
  long latent_dim() const { return measurement_dim * channels; }
};

/// Concatenation fusion, context first then measurements.
template <typename S>
Tensor<S> fuse(const Tensor<S>& c, const Tensor<S>& y) {
  if (c.shape != y.shape)
    throw std::invalid_argument("fuse: context and measurement lengths differ");
  const long B = c.dim(0), q = c.dim(1);
  Tensor<S> out({B, 2 * q});
  for (long b = 0; b < B; ++b) {
    out.data.segment(b * 2 * q, q) = c.data.segment(b * q, q);
    out.data.segment(b * 2 * q + q, q) = y.data.segment(b * q, q);
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Stage-1 generator: measurements -> 8x8 image, Tanh output.
template <typename S>
class RecGenFirst {
 public:
  explicit RecGenFirst(const StageModelSpec& spec) : spec_(spec) {
    const long f = spec.filters;
    seq_.template add<nn::Dense<S>>("fc", spec.latent_dim(), f * 64);
    seq_.template add<nn::Reshape<S>>("reshape", std::vector<long>{f, 8, 8});
    seq_.template add<nn::BatchNorm2<S>>("fc_bn", f);
    seq_.template add<nn::ReLU<S>>("fc_relu");
    seq_.template add<nn::Conv2<S>>("refine", f, f, 3, 1, 1);
    seq_.template add<nn::BatchNorm2<S>>("refine_bn", f);
    seq_.template add<nn::ReLU<S>>("refine_relu");
    seq_.template add<nn::Conv2<S>>("to_image", f, spec.channels, 3, 1, 1);
    seq_.template add<nn::Tanh<S>>("out_tanh");
    seq_.name_params("gen.");
  }

  void init(Rng& rng) { seq_.init(rng); }

  Tensor<S> forward(const Tensor<S>& y, bool train) {
    if (y.ndim() != 2 || y.dim(1) != spec_.latent_dim())
      throw std::invalid_argument("recgen_first: measurement dim mismatch");
    return seq_.forward(y, train);
  }

  Tensor<S> backward(const Tensor<S>& gy) { return seq_.backward(gy); }
  std::vector<Param<S>*> params() { return seq_.params(); }
  std::vector<Param<S>*> buffers() { return seq_.buffers(); }
  std::vector<std::string> structure() const {
    std::vector<std::string> out;
    seq_.describe(out);
    return out;
  }
  const StageModelSpec& spec() const { return spec_; }

 private:
  StageModelSpec spec_;
  nn::Sequential<S> seq_;
};

// ---------------------------------------------------------------------------

template <typename S>
struct StageOutputs {
  Tensor<S> output;    // o_i, clamped to [-1,1]
  Tensor<S> upscaled;  // u_i
  Tensor<S> residual;  // r_i
};

/// Stage >= 2 generator. Upper branch: learned 2x upscale of the context
/// image. Lower branch: contextual encoding, measurement fusion, decode to a
/// residual. Output is the clamped sum.
template <typename S>
class RecGenStage {
 public:
  RecGenStage(const StageModelSpec& spec, bool fusion_enabled = true)
      : spec_(spec), fusion_enabled_(fusion_enabled) {
    if (spec.stage < 2) throw std::invalid_argument("recgen_stage: stage must be >= 2");
    const long f = spec.filters;
    const int h = spec.input_side();
    const long q = spec.latent_dim();

    enc_.template add<nn::Conv2<S>>("enc_conv1", spec.channels, f, 3, 1, 1);
    enc_.template add<nn::BatchNorm2<S>>("enc_bn1", f);
    enc_.template add<nn::ReLU<S>>("enc_relu1");
    enc_.template add<nn::Conv2<S>>("enc_conv2", f, f, 3, 2, 1);
    enc_.template add<nn::BatchNorm2<S>>("enc_bn2", f);
    enc_.template add<nn::ReLU<S>>("enc_relu2");
    enc_.template add<nn::Reshape<S>>("enc_flat", std::vector<long>{f * (h / 2) * (h / 2)});
    enc_.template add<nn::Dense<S>>("enc_fc", f * (h / 2) * (h / 2), q);
    enc_.name_params("gen.");

    dec_.template add<nn::Dense<S>>("fuse_fc", 2 * q, f * h * h);
    dec_.template add<nn::Reshape<S>>("fuse_reshape", std::vector<long>{f, h, h});
    dec_.template add<nn::BatchNorm2<S>>("fuse_bn", f);
    dec_.template add<nn::ReLU<S>>("fuse_relu");
    dec_.template add<nn::Deconv2<S>>("up_deconv", f, f, 4, 2, 1);
    dec_.template add<nn::BatchNorm2<S>>("up_bn", f);
    dec_.template add<nn::ReLU<S>>("up_relu");
    dec_.template add<nn::ResBlock<S>>("resblk1", f);
    dec_.template add<nn::ResBlock<S>>("resblk2", f);
    dec_.template add<nn::ResBlock<S>>("resblk3", f);
    dec_.template add<nn::Conv2<S>>("to_image", f, spec.channels, 3, 1, 1);
    dec_.name_params("gen.");

    upper_.template add<nn::Deconv2<S>>("upscale", spec.channels, spec.channels, 4, 2, 1);
    upper_.template add<nn::Tanh<S>>("upscale_tanh");
    upper_.name_params("gen.");
  }

  void init(Rng& rng) {
    enc_.init(rng);
    dec_.init(rng);
    upper_.init(rng);
  }

  /// Contextual latent vector of the previous stage's output.
  Tensor<S> contextual_encode(const Tensor<S>& i_prev, bool train = false) {
    check_input(i_prev);
    return enc_.forward(i_prev, train);
  }

  StageOutputs<S> forward(const Tensor<S>& i_prev, const Tensor<S>& y, bool train) {
    check_input(i_prev);
    if (y.ndim() != 2 || y.dim(1) != spec_.latent_dim())
      throw std::invalid_argument("recgen_stage: measurement dim mismatch");
    Tensor<S> c = enc_.forward(i_prev, train);
    Tensor<S> ymix = y;
    if (!fusion_enabled_) ymix.data.setZero();  // SR ablation variant
    Tensor<S> fused = fuse(c, ymix);
    StageOutputs<S> out;
    out.residual = dec_.forward(fused, train);
    out.upscaled = upper_.forward(i_prev, train);
    pre_clamp_ = out.upscaled;
    pre_clamp_.data += out.residual.data;
    out.output = pre_clamp_;
    for (long i = 0; i < out.output.size(); ++i)
      out.output.data[i] = std::clamp(out.output.data[i], S(-1), S(1));
    return out;
  }

  /// Gradient w.r.t. the context image given d(loss)/d(output).
  Tensor<S> backward(const Tensor<S>& go) {
    Tensor<S> g = go;
    for (long i = 0; i < g.size(); ++i)
      if (pre_clamp_.data[i] < S(-1) || pre_clamp_.data[i] > S(1)) g.data[i] = S(0);
    Tensor<S> gi_upper = upper_.backward(g);
    Tensor<S> gfused = dec_.backward(g);
    const long B = gfused.dim(0), q = spec_.latent_dim();
    Tensor<S> gc({B, q});
    for (long b = 0; b < B; ++b)
      gc.data.segment(b * q, q) = gfused.data.segment(b * 2 * q, q);
    Tensor<S> gi_enc = enc_.backward(gc);
    gi_upper.data += gi_enc.data;
    return gi_upper;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto* p : enc_.params()) out.push_back(p);
    for (auto* p : dec_.params()) out.push_back(p);
    for (auto* p : upper_.params()) out.push_back(p);
    return out;
  }

  std::vector<Param<S>*> buffers() {
    std::vector<Param<S>*> out;
    for (auto* p : enc_.buffers()) out.push_back(p);
    for (auto* p : dec_.buffers()) out.push_back(p);
    for (auto* p : upper_.buffers()) out.push_back(p);
    return out;
  }

  std::vector<std::string> structure() const {
    std::vector<std::string> out;
    enc_.describe(out);
    dec_.describe(out);
    upper_.describe(out);
    return out;
  }

  bool fusion_enabled() const { return fusion_enabled_; }
  const StageModelSpec& spec() const { return spec_; }

 private:
  void check_input(const Tensor<S>& i_prev) const {
    if (i_prev.ndim() != 4 || i_prev.dim(1) != spec_.channels ||
        i_prev.dim(2) != spec_.input_side() || i_prev.dim(3) != spec_.input_side())
      throw std::invalid_argument("recgen_stage: context resolution mismatch");
  }

  StageModelSpec spec_;
  bool fusion_enabled_;
  nn::Sequential<S> enc_, dec_, upper_;
  Tensor<S> pre_clamp_;
};

// ---------------------------------------------------------------------------

/// DCGAN-style discriminator: strided convolutions with leaky rectification
/// down to 4x4, then a dense sigmoid head.
template <typename S>
class RecDisc {
 public:
  explicit RecDisc(const StageModelSpec& spec) : spec_(spec) {
    const long f = spec.filters;
    int side = spec.output_side();
    long ch = spec.channels, out_ch = f;
    int idx = 0;
    while (side > 4) {
      std::string name = "conv" + std::to_string(idx);
      seq_.template add<nn::Conv2<S>>(name, ch, out_ch, 4, 2, 1);
      if (idx > 0) seq_.template add<nn::BatchNorm2<S>>(name + "_bn", out_ch);
      seq_.template add<nn::LeakyReLU<S>>(name + "_lrelu", S(0.2));
      ch = out_ch;
      out_ch *= 2;
      side /= 2;
      ++idx;
    }
    seq_.template add<nn::Reshape<S>>("flat", std::vector<long>{ch * side * side});
    seq_.template add<nn::Dense<S>>("fc", ch * side * side, 1);
    seq_.template add<nn::Sigmoid<S>>("prob");
    seq_.name_params("disc.");
  }

  void init(Rng& rng) { seq_.init(rng); }

  /// Probabilities in (0,1), one per batch row.
  Tensor<S> forward(const Tensor<S>& x, bool train) {
    if (x.ndim() != 4 || x.dim(2) != spec_.output_side())
      throw std::invalid_argument("recdisc: resolution mismatch");
    return seq_.forward(x, train);
  }

  Tensor<S> backward(const Tensor<S>& gy) { return seq_.backward(gy); }
  std::vector<Param<S>*> params() { return seq_.params(); }
  std::vector<Param<S>*> buffers() { return seq_.buffers(); }
  std::vector<std::string> structure() const {
    std::vector<std::string> out;
    seq_.describe(out);
    return out;
  }

 private:
  StageModelSpec spec_;
  nn::Sequential<S> seq_;
};

// ---------------------------------------------------------------------------

/// Trained parameters of one stage (generator + discriminator) plus where
/// each tensor came from.
struct StageWeights {
  int stage = 1;
  nn::NamedTensors tensors;
  std::vector<std::string> transferred;  // names copied from the previous stage
  std::vector<std::string> fresh;
};

/// Concatenated trainable parameters and non-trainable buffers of a model.
template <typename M>
auto full_state(M& model) {
  auto out = model.params();
  for (auto* b : model.buffers()) out.push_back(b);
  return out;
}

template <typename S>
nn::NamedTensors snapshot(std::vector<Param<S>*> params) {
  nn::NamedTensors t;
  for (auto* p : params)
    t.put(p->name, p->shape, p->value.template cast<float>());
  return t;
}

template <typename S>
void restore(std::vector<Param<S>*> params, const nn::NamedTensors& t) {
  for (auto* p : params) {
    const auto& src = t.get(p->name);
    if (src.shape != p->shape)
      throw std::runtime_error("restore: shape mismatch for " + p->name);
    p->value = src.data.template cast<S>();
  }
}

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
};

/// Copies every destination parameter whose name and shape match a source
/// tensor; the rest keep their fresh initialization. Mismatch is expected.
template <typename S>
TransferReport transfer_weights(const nn::NamedTensors& src,
                                std::vector<Param<S>*> dst_params) {
  TransferReport report;
  for (auto* p : dst_params) {
    if (src.has(p->name) && src.get(p->name).shape == p->shape) {
      p->value = src.get(p->name).data.template cast<S>();
      report.copied.push_back(p->name);
    } else {
      report.fresh.push_back(p->name);
    }
  }
  return report;
}

}  // namespace lapran::models
