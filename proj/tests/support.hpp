#pragma once

// Brute-force reference implementations and random generators shared by the
// unit tests and the acceptance binary. Everything here is written from the
// textbook definitions with plain loops in double precision and shares no
// code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ssdr/image.hpp"
#include "ssdr/rng.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr::testing {

template <class T = double>
BasicTensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  BasicTensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return a.size() == b.size() ? m : std::numeric_limits<double>::infinity();
}

template <class T>
std::vector<double> as_double(const BasicTensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// y[n,o,i,j] = b[o] + sum_{c,u,v} w[o,c,u,v] * x[n,c,i*s+u-p,j*s+v-p]
inline std::vector<double> conv_oracle(const BasicTensor<double>& x, const BasicTensor<double>& w,
                                       const BasicTensor<double>& b, std::size_t s, std::size_t p) {
  const long N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), K = w.dim(2);
  const long S = static_cast<long>(s), P = static_cast<long>(p);
  const long Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;
  std::vector<double> y(static_cast<std::size_t>(N * O * Ho * Wo));
  for (long n = 0; n < N; ++n)
    for (long o = 0; o < O; ++o)
      for (long i = 0; i < Ho; ++i)
        for (long j = 0; j < Wo; ++j) {
          double acc = b[o];
          for (long c = 0; c < C; ++c)
            for (long u = 0; u < K; ++u)
              for (long v = 0; v < K; ++v) {
                const long yy = i * S + u - P, xx = j * S + v - P;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += w[((o * C + c) * K + u) * K + v] * x[((n * C + c) * H + yy) * W + xx];
              }
          y[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

struct ConvGradOracle {
  std::vector<double> gx, gw, gb;
};

// Gradients of sum(g * conv(x)) by scattering each output's contribution.
inline ConvGradOracle conv_grad_oracle(const BasicTensor<double>& x, const BasicTensor<double>& w,
                                       const std::vector<double>& g, std::size_t s, std::size_t p) {
  const long N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), K = w.dim(2);
  const long S = static_cast<long>(s), P = static_cast<long>(p);
  const long Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;
  ConvGradOracle r{std::vector<double>(x.size()), std::vector<double>(w.size()), std::vector<double>(O)};
  for (long n = 0; n < N; ++n)
    for (long o = 0; o < O; ++o)
      for (long i = 0; i < Ho; ++i)
        for (long j = 0; j < Wo; ++j) {
          const double go = g[static_cast<std::size_t>(((n * O + o) * Ho + i) * Wo + j)];
          r.gb[o] += go;
          for (long c = 0; c < C; ++c)
            for (long u = 0; u < K; ++u)
              for (long v = 0; v < K; ++v) {
                const long yy = i * S + u - P, xx = j * S + v - P;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                const long xi = ((n * C + c) * H + yy) * W + xx, wi = ((o * C + c) * K + u) * K + v;
                r.gw[wi] += go * x[xi];
                r.gx[xi] += go * w[wi];
              }
        }
  return r;
}

inline std::vector<double> maxpool_oracle(const BasicTensor<double>& x) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> y;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H / 2; ++i)
        for (std::size_t j = 0; j < W / 2; ++j) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t u = 0; u < 2; ++u)
            for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x.at(n, c, 2 * i + u, 2 * j + v));
          y.push_back(m);
        }
  return y;
}

inline std::vector<double> gap_oracle(const BasicTensor<double>& x) {
  std::vector<double> y;
  for (std::size_t n = 0; n < x.dim(0); ++n)
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j) s += x.at(n, c, i, j);
      y.push_back(s / static_cast<double>(x.dim(2) * x.dim(3)));
    }
  return y;
}

struct BatchNormOracle {
  std::vector<double> y, mean, var;  // biased batch variance
};

inline BatchNormOracle batchnorm_oracle(const BasicTensor<double>& x, const BasicTensor<double>& gamma,
                                        const BasicTensor<double>& beta, double eps) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  BatchNormOracle r{std::vector<double>(x.size()), std::vector<double>(C), std::vector<double>(C)};
  const double m = static_cast<double>(N * H * W);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) s += x.at(n, c, i, j);
    r.mean[c] = s / m;
    double v = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) v += (x.at(n, c, i, j) - r.mean[c]) * (x.at(n, c, i, j) - r.mean[c]);
    r.var[c] = v / m;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const std::size_t k = ((n * C + c) * H + i) * W + j;
          r.y[k] = gamma[c] * (x[k] - r.mean[c]) / std::sqrt(r.var[c] + eps) + beta[c];
        }
  }
  return r;
}

struct SoftmaxOracle {
  double loss;
  std::vector<double> probs, grad;
};

// Direct log-sum-exp without max shifting (inputs kept moderate).
inline SoftmaxOracle softmax_ce_oracle(const BasicTensor<double>& z, const std::vector<int>& labels) {
  const std::size_t N = z.dim(0), K = z.dim(1);
  SoftmaxOracle r{0.0, std::vector<double>(z.size()), std::vector<double>(z.size())};
  for (std::size_t n = 0; n < N; ++n) {
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(z.at(n, k));
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(z.at(n, k)) / denom;
      r.probs[n * K + k] = p;
      r.grad[n * K + k] = (p - (static_cast<int>(k) == labels[n] ? 1.0 : 0.0)) / static_cast<double>(N);
    }
    r.loss -= std::log(r.probs[n * K + static_cast<std::size_t>(labels[n])]) / static_cast<double>(N);
  }
  return r;
}

/// Image with a smooth random field plus texture, roughly like a photograph
/// of a metal surface: mean and contrast vary per image, few saturated pixels.
inline GrayImage natural_image(std::mt19937_64& rng, std::size_t side = 200) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mean = 60.0 + 120.0 * u(rng), contrast = 10.0 + 25.0 * u(rng);
  const double fx = 0.01 + 0.08 * u(rng), fy = 0.01 + 0.08 * u(rng), phase = 6.28 * u(rng);
  std::normal_distribution<double> grain(0.0, 4.0 + 6.0 * u(rng));
  GrayImage img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double v = mean + contrast * std::sin(fx * x + phase) * std::cos(fy * y) + grain(rng);
      img.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  return img;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ssdr-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ssdr::testing
