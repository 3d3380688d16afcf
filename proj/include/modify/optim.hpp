#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "modify/autodiff.hpp"
#include "modify/nets.hpp"

namespace modify::optim {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
      throw ConfigError("adam: invalid hyperparameters");
  }
  bool operator==(const AdamConfig&) const = default;
};

// Per-parameter slot; moments are exposed so checkpoints can round-trip the
// exact optimizer state.
template <class T>
struct AdamSlot {
  std::string name;
  ad::Var<T> param;
  Tensor<T> m, v;
};

template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const std::vector<nets::NamedParam<T>>& params) : cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params)
      slots_.push_back({p.name, p.var, Tensor<T>::zeros(p.var.shape()), Tensor<T>::zeros(p.var.shape())});
  }

  // Applies one update. Parameters without a recorded gradient are treated as
  // zero-gradient (their moments decay). `frozen` skips a slot entirely.
  void step(const ad::GradMap<T>& grads,
            const std::function<bool(const std::string&)>& frozen = {}) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T eps = static_cast<T>(cfg_.epsilon);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (auto& s : slots_) {
      if (frozen && frozen(s.name)) continue;
      Tensor<T> g = grads.get_or_zero(s.param).value();
      T* w = s.param.node()->value.data();
      T* m = s.m.data();
      T* v = s.v.data();
      const T* gp = g.data();
      const std::int64_t n = s.m.numel();
      for (std::int64_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * gp[i];
        v[i] = b2 * v[i] + (T(1) - b2) * gp[i] * gp[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        w[i] = w[i] - lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<AdamSlot<T>>& slots() { return slots_; }
  const std::vector<AdamSlot<T>>& slots() const { return slots_; }

 private:
  AdamConfig cfg_;
  std::vector<AdamSlot<T>> slots_;
  std::int64_t t_ = 0;
};

}  // namespace modify::optim
