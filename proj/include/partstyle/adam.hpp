#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "partstyle/tensor.hpp"

namespace partstyle {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct BasicAdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  long step = 0;
};

// Adam with bias correction. Moment buffers are created lazily on the first
// step and keyed by parameter position, so the same parameter list must be
// passed on every call.
template <typename T>
class BasicAdam {
 public:
  explicit BasicAdam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const noexcept { return cfg_; }
  const BasicAdamState<T>& state() const noexcept { return state_; }

  void step(std::span<BasicParameter<T>* const> params) {
    if (state_.m.empty()) {
      for (auto* p : params) {
        state_.m.push_back(BasicTensor<T>::zeros(p->value.shape()));
        state_.v.push_back(BasicTensor<T>::zeros(p->value.shape()));
      }
    }
    if (state_.m.size() != params.size()) {
      throw ContractError("adam: parameter list changed size between steps");
    }
    ++state_.step;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      auto& m = state_.m[i];
      auto& v = state_.v[i];
      if (m.shape() != p.value.shape()) throw ContractError("adam: moment shape mismatch for " + p.name);
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = static_cast<double>(p.grad[j]);
        const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * g;
        const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * g * g;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  BasicAdamState<T> state_;
};

using Adam = BasicAdam<float>;

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<BasicParameter<T>* const> params, double max_norm) {
  double total = 0.0;
  for (auto* p : params)
    for (T g : p->grad.data()) total += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto* p : params)
      for (T& g : p->grad.data()) g *= s;
  }
  return norm;
}

template <typename T>
void zero_grads(std::span<BasicParameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace partstyle
