#pragma once

// Procedural stand-in for the steel-defect images: six 200x200 texture
// classes, each drawn around its own base gray level with randomized
// phase/position plus Gaussian speckle.
//
//   0 horizontal stripes          base  55
//   1 diagonal (45 deg) stripes   base  85
//   2 a few large bright blobs    base 110
//   3 many small dark pits        base 200
//   4 checkerboard                base 145
//   5 horizontal ramp + scratches base 170

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "ssdr/image.hpp"
#include "ssdr/rng.hpp"

namespace ssdr {

namespace detail {

inline GrayImage render_texture(int cls, Rng& rng) {
  constexpr std::size_t n = kImageSide;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::vector<double> f(n * n);
  auto paint = [&](auto fn) {
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) f[y * n + x] = fn(static_cast<double>(y), static_cast<double>(x));
  };
  auto spots = [&](int count, double r_lo, double r_hi, double amp) {
    for (int k = 0; k < count; ++k) {
      const double cy = uniform(0, n), cx = uniform(0, n), r = uniform(r_lo, r_hi);
      const auto y0 = static_cast<std::size_t>(std::max(0.0, cy - 3 * r));
      const auto y1 = static_cast<std::size_t>(std::min<double>(n, cy + 3 * r));
      const auto x0 = static_cast<std::size_t>(std::max(0.0, cx - 3 * r));
      const auto x1 = static_cast<std::size_t>(std::min<double>(n, cx + 3 * r));
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          f[y * n + x] += amp * std::exp(-d2 / (2 * r * r));
        }
    }
  };
  double speckle = 6.0;
  switch (cls) {
    case 0: {
      const double period = uniform(10, 14), phase = uniform(0, two_pi);
      paint([&](double y, double) { return 55 + 35 * std::sin(two_pi * y / period + phase); });
      break;
    }
    case 1: {
      const double period = uniform(18, 22), phase = uniform(0, two_pi);
      paint([&](double y, double x) { return 85 + 35 * std::sin(two_pi * (x + y) / (period * std::numbers::sqrt2) + phase); });
      break;
    }
    case 2:
      paint([](double, double) { return 110.0; });
      spots(static_cast<int>(uniform(3, 6)), 18, 30, 60);
      break;
    case 3:
      paint([](double, double) { return 200.0; });
      spots(static_cast<int>(uniform(60, 90)), 2, 4, -70);
      break;
    case 4: {
      const double cell = uniform(20, 28), oy = uniform(0, cell), ox = uniform(0, cell);
      paint([&](double y, double x) {
        const auto parity = (static_cast<long>(std::floor((y + oy) / cell)) + static_cast<long>(std::floor((x + ox) / cell))) & 1;
        return parity ? 175.0 : 115.0;
      });
      break;
    }
    default: {
      const double slope = (u01(rng) < 0.5 ? -1.0 : 1.0) * uniform(0.2, 0.3);
      paint([&](double, double x) { return 170 + slope * (x - n / 2.0); });
      const int lines = static_cast<int>(uniform(3, 7));
      for (int k = 0; k < lines; ++k) {
        const double x0 = uniform(10, n - 10), tilt = uniform(-0.15, 0.15);
        const auto ylo = static_cast<std::size_t>(uniform(0, n / 2.0)), yhi = ylo + static_cast<std::size_t>(uniform(60, n / 2.0));
        for (std::size_t y = ylo; y < std::min(yhi, n); ++y) {
          const auto xc = static_cast<long>(std::lround(x0 + tilt * static_cast<double>(y)));
          for (long dx = -1; dx <= 1; ++dx) {
            const long x = xc + dx;
            if (x >= 0 && x < static_cast<long>(n)) f[y * n + static_cast<std::size_t>(x)] += 45;
          }
        }
      }
      speckle = 9.0;
      break;
    }
  }
  std::normal_distribution<double> noise(0.0, speckle);
  GrayImage img(n, n);
  for (std::size_t i = 0; i < f.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(f[i] + noise(rng)), 0.0, 255.0));
  }
  return img;
}

}  // namespace detail

/// Image i of class c depends only on (seed, c, i), so a larger n_per_class
/// extends a smaller one. Output is class-major.
inline Dataset synth_dataset(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("synthetic dataset needs at least one image per class");
  Dataset ds{{}, "synthetic(seed=" + std::to_string(seed) + ")"};
  ds.images.reserve(n_per_class * kClassNames.size());
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng = make_rng(seed, "synth", c * 1'000'000 + i);
      ds.images.push_back({detail::render_texture(static_cast<int>(c), rng), static_cast<int>(c),
                           "synthetic/" + std::string(kClassNames[c]) + "/" + std::to_string(i)});
    }
  }
  return ds;
}

}  // namespace ssdr
