#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lapran/nn/layers.hpp"

namespace lapran::nn {

template <typename S>
struct AdamConfig {
  S lr = S(1e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

/// Adaptive-moment optimizer over a fixed parameter list. State is keyed by
/// position, so the list must be stable for the lifetime of the optimizer.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, AdamConfig<S> cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(VecX<S>::Zero(p->size()));
      v_.push_back(VecX<S>::Zero(p->size()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(cfg_.beta1, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(cfg_.beta2, static_cast<S>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      m_[i] = cfg_.beta1 * m_[i] + (S(1) - cfg_.beta1) * p->grad;
      v_[i] = cfg_.beta2 * v_[i].array().matrix() +
              (S(1) - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
      p->value.array() -= cfg_.lr * (m_[i].array() / bc1) /
                          ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    }
  }

  long step_count() const { return t_; }
  const AdamConfig<S>& config() const { return cfg_; }

  // Moment buffers in parameter-list order, for checkpointing.
  std::vector<VecX<S>>& first_moments() { return m_; }
  std::vector<VecX<S>>& second_moments() { return v_; }
  void set_step_count(long t) { t_ = t; }

 private:
  std::vector<Param<S>*> params_;
  AdamConfig<S> cfg_;
  std::vector<VecX<S>> m_, v_;
  long t_ = 0;
};

}  // namespace lapran::nn
