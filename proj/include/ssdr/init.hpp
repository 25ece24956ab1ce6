#pragma once

#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "ssdr/network.hpp"
#include "ssdr/params.hpp"
#include "ssdr/rng.hpp"

namespace ssdr {

enum class InitKind { Gaussian, Uniform, Xavier, Msra };

struct InitMethod {
  InitKind kind = InitKind::Gaussian;
  double gaussian_std = 0.01;
  double uniform_bound = 0.01;
  double bias = 0.01;

  static InitMethod gaussian() { return {InitKind::Gaussian}; }
  static InitMethod uniform() { return {InitKind::Uniform}; }
  static InitMethod xavier() { return {InitKind::Xavier}; }
  static InitMethod msra() { return {InitKind::Msra}; }

  static InitMethod parse(std::string_view s) {
    if (s == "gaussian") return gaussian();
    if (s == "uniform") return uniform();
    if (s == "xavier") return xavier();
    if (s == "msra") return msra();
    throw ConfigError("unknown init method '" + std::string(s) + "' (gaussian|uniform|xavier|msra)");
  }

  std::string_view name() const {
    switch (kind) {
      case InitKind::Gaussian: return "gaussian";
      case InitKind::Uniform: return "uniform";
      case InitKind::Xavier: return "xavier";
      case InitKind::Msra: return "msra";
    }
    return "?";
  }

  friend bool operator==(const InitMethod&, const InitMethod&) = default;
};

/// Conv fans: fan_in = C_in*K*K, fan_out = C_out*K*K.
inline double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline double msra_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

/// Conv weights drawn per method, every bias set to the method's constant,
/// batch-norm gamma = 1, beta = 0, running mean 0, running variance 1.
template <class T = float>
BasicParamStore<T> init_params(const NetworkSpec& spec, const InitMethod& method, Rng& rng) {
  BasicParamStore<T> out;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Conv) {
      const std::size_t fan_in = l.in_channels * l.kernel * l.kernel;
      const std::size_t fan_out = l.out_channels * l.kernel * l.kernel;
      BasicTensor<T> w(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel});
      auto draw = [&](auto dist) {
        for (auto& v : w.data()) v = static_cast<T>(dist(rng));
      };
      switch (method.kind) {
        case InitKind::Gaussian: draw(std::normal_distribution<double>(0.0, method.gaussian_std)); break;
        case InitKind::Uniform:
          draw(std::uniform_real_distribution<double>(-method.uniform_bound, method.uniform_bound));
          break;
        case InitKind::Xavier: {
          const double b = xavier_bound(fan_in, fan_out);
          draw(std::uniform_real_distribution<double>(-b, b));
          break;
        }
        case InitKind::Msra: draw(std::normal_distribution<double>(0.0, msra_std(fan_in))); break;
      }
      out.add(l.name + ".weight", std::move(w));
      out.add(l.name + ".bias", BasicTensor<T>(Shape{l.out_channels}, static_cast<T>(method.bias)));
    } else if (l.kind == LayerKind::BatchNorm) {
      const Shape s{l.in_channels};
      out.add(l.name + ".gamma", BasicTensor<T>(s, T{1}));
      out.add(l.name + ".beta", BasicTensor<T>(s, T{0}));
      out.add_buffer(l.name + ".running_mean", BasicTensor<T>(s, T{0}));
      out.add_buffer(l.name + ".running_var", BasicTensor<T>(s, T{1}));
    }
  }
  return out;
}

}  // namespace ssdr
