#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "ssdr/image.hpp"
#include "ssdr/rng.hpp"

namespace ssdr {

struct NoiseSpec {
  double snr_db = 30.0;
  bool apply_to_train = true;
  bool apply_to_test = true;
};

struct NoiseResult {
  LabeledImage image;
  double signal_variance = 0.0;
  double target_noise_variance = 0.0;
  double realized_noise_variance = 0.0;  // of the sampled field, before rounding and clamping
  bool passthrough = false;               // zero-variance image, left unchanged
};

inline double pixel_variance(const GrayImage& img) {
  double mean = 0.0;
  for (auto p : img.pixels) mean += p;
  mean /= static_cast<double>(img.pixels.size());
  double var = 0.0;
  for (auto p : img.pixels) var += (p - mean) * (p - mean);
  return var / static_cast<double>(img.pixels.size());
}

/// Zero-mean Gaussian noise whose variance is the image's own pixel variance
/// divided by 10^(snr_db/10); p' = clamp(round(p + e), 0, 255).
inline NoiseResult add_gaussian_noise(const LabeledImage& img, double snr_db, Rng& rng) {
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite");
  NoiseResult r{img, pixel_variance(img.image), 0.0, 0.0, false};
  r.image.source += "#snr" + std::to_string(static_cast<int>(std::lround(snr_db)));
  if (r.signal_variance == 0.0) {
    r.passthrough = true;
    return r;
  }
  r.target_noise_variance = r.signal_variance / std::pow(10.0, snr_db / 10.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(r.target_noise_variance));
  double sum = 0.0, sum_sq = 0.0;
  auto& px = r.image.image.pixels;
  for (auto& p : px) {
    const double e = noise(rng);
    sum += e;
    sum_sq += e * e;
    p = static_cast<std::uint8_t>(std::clamp(std::round(p + e), 0.0, 255.0));
  }
  const double n = static_cast<double>(px.size());
  r.realized_noise_variance = sum_sq / n - (sum / n) * (sum / n);
  return r;
}

inline double realized_snr_db(const NoiseResult& r) {
  return 10.0 * std::log10(r.signal_variance / r.realized_noise_variance);
}

}  // namespace ssdr
