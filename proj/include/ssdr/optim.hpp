#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssdr/params.hpp"

namespace ssdr {

/// Piecewise-constant exponential decay: initial * decay^floor(step / interval).
struct LrSchedule {
  double initial = 0.02;
  double decay = 0.9;
  std::size_t interval = 500;
};

inline double lr_at(const LrSchedule& s, std::size_t step) {
  return s.initial * std::pow(s.decay, static_cast<double>(step / s.interval));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig config;
  std::uint64_t t = 0;
  std::map<std::string, Moments> moments;
};

/// One bias-corrected Adam update of every trainable parameter, after which
/// all gradient slots are zeroed. Frozen parameters and buffers are untouched.
inline void adam_step(ParamStore& params, AdamState& state, double lr) {
  const auto& c = state.config;
  ++state.t;
  const double correct1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double correct2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (p.trainable && !p.buffer) {
      auto& mom = state.moments[name];
      if (mom.m.size() != p.value.size()) mom.m.assign(p.value.size(), 0.0), mom.v.assign(p.value.size(), 0.0);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        mom.m[i] = c.beta1 * mom.m[i] + (1.0 - c.beta1) * g;
        mom.v[i] = c.beta2 * mom.v[i] + (1.0 - c.beta2) * g * g;
        const double mhat = mom.m[i] / correct1, vhat = mom.v[i] / correct2;
        p.value[i] = static_cast<float>(p.value[i] - lr * mhat / (std::sqrt(vhat) + c.epsilon));
      }
    }
    p.grad.fill(0.0f);
  }
}

}  // namespace ssdr
