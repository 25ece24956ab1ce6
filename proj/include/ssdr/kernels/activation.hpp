#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssdr/rng.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

enum class Mode { Train, Eval };

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

// Subgradient 0 at x == 0.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  if (!(x.shape() == grad_out.shape())) {
    throw ShapeError("relu_backward: " + x.shape().str() + " vs " + grad_out.shape().str());
  }
  BasicTensor<T> gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return gx;
}

/// 1 = kept, 0 = dropped.
using DropoutMask = std::vector<std::uint8_t>;

template <class T>
struct DropoutResult {
  BasicTensor<T> output;
  DropoutMask mask;
};

inline void check_keep_prob(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("dropout keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
}

/// Inverted dropout: kept units are scaled by 1/keep_prob at train time, so
/// eval mode is the identity.
template <class T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double keep_prob, Mode mode, Rng& rng) {
  check_keep_prob(keep_prob);
  DropoutResult<T> r{x, DropoutMask(x.size(), 1)};
  if (mode == Mode::Eval || keep_prob == 1.0) return r;
  std::bernoulli_distribution keep(keep_prob);
  const T scale = static_cast<T>(1.0 / keep_prob);
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = keep(rng) ? 1 : 0;
    r.output[i] = r.mask[i] ? x[i] * scale : T{0};
  }
  return r;
}

template <class T>
BasicTensor<T> dropout_backward(const DropoutMask& mask, double keep_prob, const BasicTensor<T>& grad_out) {
  check_keep_prob(keep_prob);
  if (mask.size() != grad_out.size()) {
    throw ShapeError("dropout_backward: mask of " + std::to_string(mask.size()) + " elements vs grad_out " +
                     grad_out.shape().str());
  }
  BasicTensor<T> gx(grad_out.shape());
  const T scale = static_cast<T>(1.0 / keep_prob);
  for (std::size_t i = 0; i < mask.size(); ++i) gx[i] = mask[i] ? grad_out[i] * scale : T{0};
  return gx;
}

}  // namespace ssdr
