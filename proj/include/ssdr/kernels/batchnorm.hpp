#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ssdr/kernels/activation.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel affine parameters plus running statistics, which train-mode
/// forward updates in place.
template <class T>
struct BatchNormParams {
  const BasicTensor<T>& gamma;
  const BasicTensor<T>& beta;
  BasicTensor<T>& running_mean;
  BasicTensor<T>& running_var;
  double eps = kBatchNormEps;
  double momentum = kBatchNormMomentum;
};

template <class T>
struct BatchNormGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_gamma;
  BasicTensor<T> grad_beta;
};

namespace detail {

template <class T>
std::size_t check_batchnorm(const Shape& x, const BatchNormParams<T>& p) {
  require_rank(x, 4, "batchnorm input");
  const std::size_t c = x[1];
  if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c || p.running_var.size() != c) {
    throw ShapeError("batchnorm: parameters do not match the " + std::to_string(c) + " channels of " + x.str());
  }
  if (!(p.eps > 0.0)) throw ConfigError("batchnorm: eps must be positive");
  return c;
}

// Two-pass population mean and variance per channel over N*H*W.
template <class T>
void channel_moments(const BasicTensor<T>& x, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * hw);
  mean.assign(c, 0.0);
  var.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) s += src[i];
    }
    mean[ch] = s / count;
    double q = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = src[i] - mean[ch];
        q += d * d;
      }
    }
    var[ch] = q / count;
  }
}

}  // namespace detail

template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BatchNormParams<T> p, Mode mode) {
  const std::size_t c = detail::check_batchnorm(x.shape(), p);
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<double> mean, var;
  if (mode == Mode::Train) {
    detail::channel_moments(x, mean, var);
    for (std::size_t ch = 0; ch < c; ++ch) {
      p.running_mean[ch] = static_cast<T>((1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mean[ch]);
      p.running_var[ch] = static_cast<T>((1.0 - p.momentum) * p.running_var[ch] + p.momentum * var[ch]);
    }
  } else {
    mean.assign(p.running_mean.data().begin(), p.running_mean.data().end());
    var.assign(p.running_var.data().begin(), p.running_var.data().end());
  }
  BasicTensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double scale = p.gamma[ch] / std::sqrt(var[ch] + p.eps);
    const double shift = p.beta[ch] - mean[ch] * scale;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = static_cast<T>(x[off + i] * scale + shift);
    }
  }
  check_finite(y, "batchnorm_forward");
  return y;
}

/// Gradients of train-mode batchnorm_forward, differentiating through the
/// batch mean and variance. Running statistics are not touched.
template <class T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BatchNormParams<T>& p,
                                     const BasicTensor<T>& grad_out) {
  const std::size_t c = detail::check_batchnorm(x.shape(), p);
  if (!(grad_out.shape() == x.shape())) {
    throw ShapeError("batchnorm_backward: grad_out " + grad_out.shape().str() + " vs input " + x.shape().str());
  }
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * hw);
  std::vector<double> mean, var;
  detail::channel_moments(x, mean, var);

  BatchNormGrads<T> r{BasicTensor<T>(x.shape()), BasicTensor<T>(p.gamma.shape()), BasicTensor<T>(p.beta.shape())};
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv_std = 1.0 / std::sqrt(var[ch] + p.eps);
    double sum_g = 0.0, sum_g_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double g = grad_out[off + i];
        sum_g += g;
        sum_g_xhat += g * (x[off + i] - mean[ch]) * inv_std;
      }
    }
    r.grad_beta[ch] = static_cast<T>(sum_g);
    r.grad_gamma[ch] = static_cast<T>(sum_g_xhat);
    // dx = gamma * inv_std / M * (M*g - sum(g) - xhat * sum(g*xhat))
    const double k = p.gamma[ch] * inv_std / count;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xhat = (x[off + i] - mean[ch]) * inv_std;
        r.grad_x[off + i] = static_cast<T>(k * (count * grad_out[off + i] - sum_g - xhat * sum_g_xhat));
      }
    }
  }
  return r;
}

}  // namespace ssdr
