#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cyclesense/nn/tape.hpp"
#include "cyclesense/nn/tensor.hpp"

namespace cyclesense::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

template <typename S>
struct AdamState {
  Tensor<S> m;
  Tensor<S> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `param` in place.
template <typename S>
void adam_step(Tensor<S>& param, const Tensor<S>& grad, AdamState<S>& state, const AdamConfig& config) {
  if (grad.shape() != param.shape()) throw ShapeMismatch("adam: gradient shape differs from parameter shape");
  if (state.m.shape() != param.shape()) {
    state.m = Tensor<S>(param.shape());
    state.v = Tensor<S>(param.shape());
  }
  ++state.t;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = b1 * state.m[i] + (1.0 - b1) * g;
    const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
    state.m[i] = static_cast<S>(m);
    state.v[i] = static_cast<S>(v);
    const double step = config.lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
    param[i] = static_cast<S>(param[i] - step);
  }
}

/// Adam over a fixed list of parameters; frozen parameters and buffers in
/// the list are skipped.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Parameter<S>*> params, AdamConfig config = {})
      : config_(config), params_(std::move(params)), state_(params_.size()) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (!p->optimizable()) continue;
      if (p->grad.shape() != p->value.shape()) p->zero_grad();
      adam_step(p->value, p->grad, state_[i], config_);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<Parameter<S>*>& parameters() const { return params_; }

 private:
  AdamConfig config_;
  std::vector<Parameter<S>*> params_;
  std::vector<AdamState<S>> state_;
};

}  // namespace cyclesense::nn
