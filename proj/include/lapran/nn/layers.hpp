#pragma once

// Minimal batched CNN stack with explicit backward passes. Tensors are
// [B,C,H,W] (or [B,F] for dense layers), flat row-major. Convolutions run as
// im2col + GEMM per image; im2col is recomputed in backward instead of cached
// so peak memory stays bounded by one image's column buffer.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapran/tensor.hpp"

namespace lapran::nn {

template <typename S>
struct Param {
  std::string name;
  std::vector<long> shape;
  VecX<S> value;
  VecX<S> grad;

  long size() const { return value.size(); }
  void alloc(std::vector<long> sh) {
    shape = std::move(sh);
    long n = Tensor<S>::count(shape);
    value = VecX<S>::Zero(n);
    grad = VecX<S>::Zero(n);
  }
};

template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<S> forward(const Tensor<S>& x, bool train) = 0;
  virtual Tensor<S> backward(const Tensor<S>& gy) = 0;
  virtual std::vector<Param<S>*> params() { return {}; }
  /// Non-trainable state (e.g. batch-norm running statistics).
  virtual std::vector<Param<S>*> buffers() { return {}; }
  virtual std::string kind() const = 0;
  virtual void init(Rng&) {}
  virtual void describe(std::vector<std::string>& out) const { out.push_back(kind()); }
};

// ---------------------------------------------------------------------------

template <typename S>
class Dense : public Layer<S> {
 public:
  Dense(long in, long out) : in_(in), out_(out) {
    w_.alloc({out, in});
    b_.alloc({out});
  }

  void init(Rng& rng) override {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in_)));
    for (long i = 0; i < w_.size(); ++i) w_.value[i] = static_cast<S>(dist(rng));
    b_.value.setZero();
  }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    const long batch = x.dim(0);
    if (x.size() / batch != in_) throw std::invalid_argument("dense: input dim mismatch");
    x_ = x.reshaped({batch, in_});
    Tensor<S> y({batch, out_});
    y.mat(batch, out_).noalias() = x_.mat(batch, in_) * w_.value.reshaped(in_, out_).matrix();
    y.mat(batch, out_).rowwise() += b_.value.transpose();
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const long batch = gy.dim(0);
    auto gym = gy.mat(batch, out_);
    MatMap<S> wm(w_.value.data(), out_, in_);
    MatMap<S> gwm(w_.grad.data(), out_, in_);
    gwm.noalias() += gym.transpose() * x_.mat(batch, in_);
    b_.grad += gym.colwise().sum().transpose();
    Tensor<S> gx({batch, in_});
    gx.mat(batch, in_).noalias() = gym * wm;
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  std::string kind() const override { return "dense"; }

  Param<S> w_, b_;

 private:
  long in_, out_;
  Tensor<S> x_;
};

// ---------------------------------------------------------------------------

namespace detail {

inline long conv_out(long in, long k, long s, long p) { return (in + 2 * p - k) / s + 1; }

// x[C,H,W] -> cols[C*k*k, OH*OW]
template <typename S>
void im2col(const S* x, long C, long H, long W, long k, long s, long p, S* cols) {
  const long OH = conv_out(H, k, s, p), OW = conv_out(W, k, s, p);
  for (long c = 0; c < C; ++c)
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx) {
        S* row = cols + ((c * k + ky) * k + kx) * OH * OW;
        for (long oy = 0; oy < OH; ++oy) {
          const long iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) {
            for (long ox = 0; ox < OW; ++ox) row[oy * OW + ox] = S(0);
            continue;
          }
          const S* src = x + (c * H + iy) * W;
          for (long ox = 0; ox < OW; ++ox) {
            const long ix = ox * s - p + kx;
            row[oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
}

// Scatter-add inverse of im2col: cols[C*k*k, OH*OW] -> x[C,H,W] (accumulated).
template <typename S>
void col2im(const S* cols, long C, long H, long W, long k, long s, long p, S* x) {
  const long OH = conv_out(H, k, s, p), OW = conv_out(W, k, s, p);
  for (long c = 0; c < C; ++c)
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx) {
        const S* row = cols + ((c * k + ky) * k + kx) * OH * OW;
        for (long oy = 0; oy < OH; ++oy) {
          const long iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          S* dst = x + (c * H + iy) * W;
          for (long ox = 0; ox < OW; ++ox) {
            const long ix = ox * s - p + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * OW + ox];
          }
        }
      }
}

}  // namespace detail

template <typename S>
class Conv2 : public Layer<S> {
 public:
  Conv2(long in_ch, long out_ch, long k, long stride, long pad)
      : ic_(in_ch), oc_(out_ch), k_(k), s_(stride), p_(pad) {
    w_.alloc({oc_, ic_, k_, k_});
    b_.alloc({oc_});
  }

  void init(Rng& rng) override {
    const double fan_in = static_cast<double>(ic_ * k_ * k_);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (long i = 0; i < w_.size(); ++i) w_.value[i] = static_cast<S>(dist(rng));
    b_.value.setZero();
  }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    const long B = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (x.dim(1) != ic_) throw std::invalid_argument("conv: channel mismatch");
    x_ = x;
    const long OH = detail::conv_out(H, k_, s_, p_), OW = detail::conv_out(W, k_, s_, p_);
    Tensor<S> y({B, oc_, OH, OW});
    const long ck2 = ic_ * k_ * k_;
    VecX<S> cols(ck2 * OH * OW);
    ConstMatMap<S> wm(w_.value.data(), oc_, ck2);
    for (long b = 0; b < B; ++b) {
      detail::im2col(x.data.data() + b * ic_ * H * W, ic_, H, W, k_, s_, p_, cols.data());
      MatMap<S> ym(y.data.data() + b * oc_ * OH * OW, oc_, OH * OW);
      ym.noalias() = wm * ConstMatMap<S>(cols.data(), ck2, OH * OW);
      ym.colwise() += b_.value;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const long B = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const long OH = gy.dim(2), OW = gy.dim(3);
    const long ck2 = ic_ * k_ * k_;
    Tensor<S> gx({B, ic_, H, W});
    VecX<S> cols(ck2 * OH * OW);
    ConstMatMap<S> wm(w_.value.data(), oc_, ck2);
    MatMap<S> gwm(w_.grad.data(), oc_, ck2);
    for (long b = 0; b < B; ++b) {
      ConstMatMap<S> gym(gy.data.data() + b * oc_ * OH * OW, oc_, OH * OW);
      // dW from recomputed columns
      detail::im2col(x_.data.data() + b * ic_ * H * W, ic_, H, W, k_, s_, p_, cols.data());
      gwm.noalias() += gym * ConstMatMap<S>(cols.data(), ck2, OH * OW).transpose();
      b_.grad += gym.rowwise().sum();
      // dX via col2im of W^T * dY
      MatMap<S>(cols.data(), ck2, OH * OW).noalias() = wm.transpose() * gym;
      detail::col2im(cols.data(), ic_, H, W, k_, s_, p_,
                     gx.data.data() + b * ic_ * H * W);
    }
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  std::string kind() const override { return "conv"; }

  Param<S> w_, b_;

 private:
  long ic_, oc_, k_, s_, p_;
  Tensor<S> x_;
};

// Transposed convolution; forward is the gradient pass of a Conv2 with the
// same geometry, so a k4 s2 p1 deconv doubles the side exactly.
template <typename S>
class Deconv2 : public Layer<S> {
 public:
  Deconv2(long in_ch, long out_ch, long k, long stride, long pad)
      : ic_(in_ch), oc_(out_ch), k_(k), s_(stride), p_(pad) {
    w_.alloc({ic_, oc_, k_, k_});
    b_.alloc({oc_});
  }

  void init(Rng& rng) override {
    const double fan_in = static_cast<double>(ic_ * k_ * k_) / static_cast<double>(s_ * s_);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (long i = 0; i < w_.size(); ++i) w_.value[i] = static_cast<S>(dist(rng));
    b_.value.setZero();
  }

  long out_side(long in) const { return (in - 1) * s_ - 2 * p_ + k_; }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    const long B = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (x.dim(1) != ic_) throw std::invalid_argument("deconv: channel mismatch");
    x_ = x;
    const long OH = out_side(H), OW = out_side(W);
    Tensor<S> y({B, oc_, OH, OW});
    const long ck2 = oc_ * k_ * k_;
    VecX<S> cols(ck2 * H * W);
    ConstMatMap<S> wm(w_.value.data(), ic_, ck2);
    for (long b = 0; b < B; ++b) {
      ConstMatMap<S> xm(x.data.data() + b * ic_ * H * W, ic_, H * W);
      MatMap<S>(cols.data(), ck2, H * W).noalias() = wm.transpose() * xm;
      S* yb = y.data.data() + b * oc_ * OH * OW;
      detail::col2im(cols.data(), oc_, OH, OW, k_, s_, p_, yb);
      MatMap<S>(yb, oc_, OH * OW).colwise() += b_.value;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const long B = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const long OH = gy.dim(2), OW = gy.dim(3);
    const long ck2 = oc_ * k_ * k_;
    Tensor<S> gx({B, ic_, H, W});
    VecX<S> cols(ck2 * H * W);
    ConstMatMap<S> wm(w_.value.data(), ic_, ck2);
    MatMap<S> gwm(w_.grad.data(), ic_, ck2);
    for (long b = 0; b < B; ++b) {
      detail::im2col(gy.data.data() + b * oc_ * OH * OW, oc_, OH, OW, k_, s_, p_,
                     cols.data());
      ConstMatMap<S> colm(cols.data(), ck2, H * W);
      ConstMatMap<S> xm(x_.data.data() + b * ic_ * H * W, ic_, H * W);
      gwm.noalias() += xm * colm.transpose();
      b_.grad += ConstMatMap<S>(gy.data.data() + b * oc_ * OH * OW, oc_, OH * OW)
                     .rowwise()
                     .sum();
      MatMap<S>(gx.data.data() + b * ic_ * H * W, ic_, H * W).noalias() = wm * colm;
    }
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  std::string kind() const override { return "deconv"; }

  Param<S> w_, b_;

 private:
  long ic_, oc_, k_, s_, p_;
  Tensor<S> x_;
};

// ---------------------------------------------------------------------------

/// Spatial batch normalization over [B,C,H,W]; batch statistics in training,
/// running averages at inference.
template <typename S>
class BatchNorm2 : public Layer<S> {
 public:
  explicit BatchNorm2(long channels, S momentum = S(0.1), S eps = S(1e-5))
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma_.alloc({channels});
    beta_.alloc({channels});
    rm_.alloc({channels});
    rv_.alloc({channels});
    gamma_.value.setOnes();
    rv_.value.setOnes();
  }

  void init(Rng&) override {
    gamma_.value.setOnes();
    beta_.value.setZero();
    rm_.value.setZero();
    rv_.value.setOnes();
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    const long B = x.dim(0), HW = x.size() / (x.dim(0) * c_);
    Tensor<S> y = x;
    if (train) {
      n_ = B * HW;
      mean_.resize(c_);
      invstd_.resize(c_);
      for (long c = 0; c < c_; ++c) {
        S sum = 0, sq = 0;
        for (long b = 0; b < B; ++b) {
          const S* px = x.data.data() + (b * c_ + c) * HW;
          for (long i = 0; i < HW; ++i) {
            sum += px[i];
            sq += px[i] * px[i];
          }
        }
        const S mean = sum / static_cast<S>(n_);
        const S var = sq / static_cast<S>(n_) - mean * mean;
        mean_[c] = mean;
        invstd_[c] = S(1) / std::sqrt(var + eps_);
        rm_.value[c] = (S(1) - momentum_) * rm_.value[c] + momentum_ * mean;
        rv_.value[c] = (S(1) - momentum_) * rv_.value[c] + momentum_ * var;
      }
      xhat_ = Tensor<S>({B, c_, HW, 1});
      for (long b = 0; b < B; ++b)
        for (long c = 0; c < c_; ++c) {
          const S* px = x.data.data() + (b * c_ + c) * HW;
          S* ph = xhat_.data.data() + (b * c_ + c) * HW;
          S* py = y.data.data() + (b * c_ + c) * HW;
          for (long i = 0; i < HW; ++i) {
            ph[i] = (px[i] - mean_[c]) * invstd_[c];
            py[i] = gamma_.value[c] * ph[i] + beta_.value[c];
          }
        }
    } else {
      for (long b = 0; b < B; ++b)
        for (long c = 0; c < c_; ++c) {
          const S istd = S(1) / std::sqrt(rv_.value[c] + eps_);
          const S* px = x.data.data() + (b * c_ + c) * HW;
          S* py = y.data.data() + (b * c_ + c) * HW;
          for (long i = 0; i < HW; ++i)
            py[i] = gamma_.value[c] * (px[i] - rm_.value[c]) * istd + beta_.value[c];
        }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const long B = gy.dim(0), HW = gy.size() / (gy.dim(0) * c_);
    Tensor<S> gx = gy;
    for (long c = 0; c < c_; ++c) {
      S sum_gy = 0, sum_gy_xhat = 0;
      for (long b = 0; b < B; ++b) {
        const S* pg = gy.data.data() + (b * c_ + c) * HW;
        const S* ph = xhat_.data.data() + (b * c_ + c) * HW;
        for (long i = 0; i < HW; ++i) {
          sum_gy += pg[i];
          sum_gy_xhat += pg[i] * ph[i];
        }
      }
      gamma_.grad[c] += sum_gy_xhat;
      beta_.grad[c] += sum_gy;
      const S inv_n = S(1) / static_cast<S>(n_);
      const S scale = gamma_.value[c] * invstd_[c];
      for (long b = 0; b < B; ++b) {
        const S* pg = gy.data.data() + (b * c_ + c) * HW;
        const S* ph = xhat_.data.data() + (b * c_ + c) * HW;
        S* px = gx.data.data() + (b * c_ + c) * HW;
        for (long i = 0; i < HW; ++i)
          px[i] = scale * (pg[i] - inv_n * sum_gy - ph[i] * inv_n * sum_gy_xhat);
      }
    }
    return gx;
  }

  std::vector<Param<S>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param<S>*> buffers() override { return {&rm_, &rv_}; }
  std::string kind() const override { return "batchnorm"; }

  Param<S> gamma_, beta_;
  Param<S> rm_, rv_;  // running mean / variance

 private:
  long c_;
  S momentum_, eps_;
  long n_ = 0;
  VecX<S> mean_, invstd_;
  Tensor<S> xhat_;
};

// ---------------------------------------------------------------------------

template <typename S>
class ReLU : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    y_ = x;
    for (long i = 0; i < y_.size(); ++i)
      if (y_.data[i] < S(0)) y_.data[i] = S(0);
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i)
      if (y_.data[i] <= S(0)) gx.data[i] = S(0);
    return gx;
  }
  std::string kind() const override { return "relu"; }

 private:
  Tensor<S> y_;
};

template <typename S>
class LeakyReLU : public Layer<S> {
 public:
  explicit LeakyReLU(S slope = S(0.2)) : slope_(slope) {}
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    x_ = x;
    Tensor<S> y = x;
    for (long i = 0; i < y.size(); ++i)
      if (y.data[i] < S(0)) y.data[i] *= slope_;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i)
      if (x_.data[i] < S(0)) gx.data[i] *= slope_;
    return gx;
  }
  std::string kind() const override { return "leaky_relu"; }

 private:
  S slope_;
  Tensor<S> x_;
};

template <typename S>
class Tanh : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    y_ = x;
    for (long i = 0; i < y_.size(); ++i) y_.data[i] = std::tanh(y_.data[i]);
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i) gx.data[i] *= (S(1) - y_.data[i] * y_.data[i]);
    return gx;
  }
  std::string kind() const override { return "tanh"; }

 private:
  Tensor<S> y_;
};

template <typename S>
class Sigmoid : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    y_ = x;
    for (long i = 0; i < y_.size(); ++i) y_.data[i] = S(1) / (S(1) + std::exp(-y_.data[i]));
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i) gx.data[i] *= y_.data[i] * (S(1) - y_.data[i]);
    return gx;
  }
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor<S> y_;
};

/// Pure shape bookkeeping between dense and spatial sections.
template <typename S>
class Reshape : public Layer<S> {
 public:
  explicit Reshape(std::vector<long> tail) : tail_(std::move(tail)) {}
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    in_shape_ = x.shape;
    std::vector<long> sh{x.dim(0)};
    sh.insert(sh.end(), tail_.begin(), tail_.end());
    return x.reshaped(sh);
  }
  Tensor<S> backward(const Tensor<S>& gy) override { return gy.reshaped(in_shape_); }
  std::string kind() const override { return "reshape"; }

 private:
  std::vector<long> tail_;
  std::vector<long> in_shape_;
};

// ---------------------------------------------------------------------------

template <typename S>
class Sequential : public Layer<S> {
 public:
  template <typename L, typename... Args>
  L& add(const std::string& name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    names_.push_back(name);
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    Tensor<S> h = x;
    for (auto& l : layers_) h = l->forward(h, train);
    return h;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void init(Rng& rng) override {
    for (auto& l : layers_) l->init(rng);
  }

  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<Param<S>*> buffers() override {
    std::vector<Param<S>*> out;
    for (auto& l : layers_)
      for (auto* p : l->buffers()) out.push_back(p);
    return out;
  }

  /// Assigns hierarchical parameter names; call once after construction.
  void name_params(const std::string& prefix) {
    for (size_t i = 0; i < layers_.size(); ++i) {
      if (auto* seq = dynamic_cast<Sequential<S>*>(layers_[i].get())) {
        seq->name_params(prefix + names_[i] + ".");
        continue;
      }
      auto ps = layers_[i]->params();
      const char* slot[] = {"w", "b"};
      for (size_t j = 0; j < ps.size(); ++j)
        ps[j]->name = prefix + names_[i] + "." +
                      (ps.size() <= 2 ? slot[j] : std::to_string(j));
      auto bs = layers_[i]->buffers();
      for (size_t j = 0; j < bs.size(); ++j)
        bs[j]->name = prefix + names_[i] + ".buf" + std::to_string(j);
    }
  }

  void describe(std::vector<std::string>& out) const override {
    for (const auto& l : layers_) l->describe(out);
  }

  std::string kind() const override { return "sequential"; }

  Layer<S>& layer(size_t i) { return *layers_[i]; }
  size_t layer_count() const { return layers_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

/// Two 3x3 convs with normalization, identity skip, rectification after the add.
template <typename S>
class ResBlock : public Layer<S> {
 public:
  explicit ResBlock(long channels)
      : conv1_(channels, channels, 3, 1, 1),
        bn1_(channels),
        conv2_(channels, channels, 3, 1, 1),
        bn2_(channels) {}

  void init(Rng& rng) override {
    conv1_.init(rng);
    bn1_.init(rng);
    conv2_.init(rng);
    bn2_.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    Tensor<S> h = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    Tensor<S> z = bn2_.forward(conv2_.forward(h, train), train);
    z.data += x.data;
    return relu_out_.forward(z, train);
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gz = relu_out_.backward(gy);
    Tensor<S> gmain = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(gz)))));
    gmain.data += gz.data;  // skip path
    return gmain;
  }

  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out;
    for (auto* l : std::initializer_list<Layer<S>*>{&conv1_, &bn1_, &conv2_, &bn2_})
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<Param<S>*> buffers() override {
    std::vector<Param<S>*> out;
    for (auto* l : std::initializer_list<Layer<S>*>{&bn1_, &bn2_})
      for (auto* p : l->buffers()) out.push_back(p);
    return out;
  }

  void describe(std::vector<std::string>& out) const override {
    out.push_back("resblock[");
    conv1_.describe(out);
    bn1_.describe(out);
    relu1_.describe(out);
    conv2_.describe(out);
    bn2_.describe(out);
    relu_out_.describe(out);
    out.push_back("]resblock");
  }

  std::string kind() const override { return "resblock"; }

 private:
  Conv2<S> conv1_;
  BatchNorm2<S> bn1_;
  ReLU<S> relu1_;
  Conv2<S> conv2_;
  BatchNorm2<S> bn2_;
  ReLU<S> relu_out_;
};

}  // namespace lapran::nn
