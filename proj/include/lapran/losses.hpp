#pragma once

#include <cmath>
#include <stdexcept>

#include "lapran/tensor.hpp"

namespace lapran::losses {

template <typename S>
struct LossWeights {
  S lambda_adv = S(1e-3);
  S lambda_euc = S(1);
};

inline constexpr double kProbEps = 1e-7;

/// Mean over the batch of the per-pixel mean squared difference. The
/// norm (non-squared) form is available behind `use_norm` so loss magnitudes
/// stay resolution-independent by default.
template <typename S>
S euclidean_loss(const Tensor<S>& x_h, const Tensor<S>& x_g, bool use_norm = false) {
  if (x_h.shape != x_g.shape) throw std::invalid_argument("euclidean_loss: shape mismatch");
  const long B = x_h.dim(0), per = x_h.size() / B;
  if (!use_norm) {
    S acc = 0;
    for (long i = 0; i < x_h.size(); ++i) {
      const S d = x_h.data[i] - x_g.data[i];
      acc += d * d;
    }
    return acc / static_cast<S>(x_h.size());
  }
  S acc = 0;
  for (long b = 0; b < B; ++b) {
    S sq = 0;
    for (long i = 0; i < per; ++i) {
      const S d = x_h.data[b * per + i] - x_g.data[b * per + i];
      sq += d * d;
    }
    acc += std::sqrt(sq);
  }
  return acc / static_cast<S>(B);
}

/// d(euclidean_loss)/d(x_h) for the default mean-squared form.
template <typename S>
Tensor<S> euclidean_loss_grad(const Tensor<S>& x_h, const Tensor<S>& x_g) {
  if (x_h.shape != x_g.shape) throw std::invalid_argument("euclidean_loss: shape mismatch");
  Tensor<S> g = x_h;
  g.data -= x_g.data;
  g.data *= S(2) / static_cast<S>(x_h.size());
  return g;
}

template <typename S>
S clamp_prob(S p) {
  return std::clamp(p, static_cast<S>(kProbEps), S(1) - static_cast<S>(kProbEps));
}

/// -mean(log d_real) - mean(log(1 - d_fake)); minimization form.
template <typename S>
S discriminator_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake) {
  S acc = 0;
  for (long i = 0; i < d_real.size(); ++i) acc -= std::log(clamp_prob(d_real.data[i]));
  S loss = acc / static_cast<S>(d_real.size());
  acc = 0;
  for (long i = 0; i < d_fake.size(); ++i)
    acc -= std::log(S(1) - clamp_prob(d_fake.data[i]));
  return loss + acc / static_cast<S>(d_fake.size());
}

/// Gradients of discriminator_loss w.r.t. the two probability vectors.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> discriminator_loss_grad(const Tensor<S>& d_real,
                                                        const Tensor<S>& d_fake) {
  Tensor<S> gr = d_real, gf = d_fake;
  for (long i = 0; i < gr.size(); ++i)
    gr.data[i] = -S(1) / (clamp_prob(d_real.data[i]) * static_cast<S>(d_real.size()));
  for (long i = 0; i < gf.size(); ++i)
    gf.data[i] = S(1) / ((S(1) - clamp_prob(d_fake.data[i])) * static_cast<S>(d_fake.size()));
  return {gr, gf};
}

/// Non-saturating generator objective: -mean(log d_fake).
template <typename S>
S generator_adv_loss(const Tensor<S>& d_fake) {
  S acc = 0;
  for (long i = 0; i < d_fake.size(); ++i) acc -= std::log(clamp_prob(d_fake.data[i]));
  return acc / static_cast<S>(d_fake.size());
}

template <typename S>
Tensor<S> generator_adv_loss_grad(const Tensor<S>& d_fake) {
  Tensor<S> g = d_fake;
  for (long i = 0; i < g.size(); ++i)
    g.data[i] = -S(1) / (clamp_prob(d_fake.data[i]) * static_cast<S>(d_fake.size()));
  return g;
}

template <typename S>
S total_loss(S euc, S adv, const LossWeights<S>& w) {
  if (w.lambda_adv == S(0)) return w.lambda_euc * euc;  // bit-equal reduction
  return w.lambda_adv * adv + w.lambda_euc * euc;
}

}  // namespace lapran::losses
