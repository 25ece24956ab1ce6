#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ssdr/image.hpp"

namespace ssdr {

inline constexpr std::array<double, 3> kBrightnessGains = {1.2, 1.4, 1.6};
inline constexpr double kBrightnessOffset = 10.0;

/// p' = min(255, round(p * gain + 10)).
inline GrayImage scale_brightness(const GrayImage& img, double gain) {
  GrayImage out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::round(img.pixels[i] * gain + kBrightnessOffset);
    out.pixels[i] = static_cast<std::uint8_t>(std::min(v, 255.0));
  }
  return out;
}

inline GrayImage flip_horizontal(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) out.at(y, img.width - 1 - x) = img.at(y, x);
  }
  return out;
}

inline GrayImage flip_vertical(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.width), img.width,
                out.pixels.begin() + static_cast<std::ptrdiff_t>((img.height - 1 - y) * img.width));
  }
  return out;
}

/// Clockwise quarter turns; (y, x) -> (x, side - 1 - y) per turn.
inline GrayImage rotate_quarter_turns(const GrayImage& img, int turns) {
  if (img.height != img.width) {
    throw DataError("rotation requires a square image, got " + std::to_string(img.width) + "x" +
                    std::to_string(img.height));
  }
  const std::size_t n = img.height;
  GrayImage cur = img;
  for (int t = 0; t < ((turns % 4) + 4) % 4; ++t) {
    GrayImage next(n, n);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) next.at(x, n - 1 - y) = cur.at(y, x);
    }
    cur = std::move(next);
  }
  return cur;
}

namespace detail {
inline LabeledImage relabel(const LabeledImage& src, GrayImage img, const char* tag) {
  return {std::move(img), src.label, src.source + tag};
}
}  // namespace detail

inline std::vector<LabeledImage> augment_brightness(const LabeledImage& img) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < kBrightnessGains.size(); ++i) {
    static constexpr const char* tags[] = {"#b1.2", "#b1.4", "#b1.6"};
    out.push_back(detail::relabel(img, scale_brightness(img.image, kBrightnessGains[i]), tags[i]));
  }
  return out;
}

/// Horizontal, vertical, and both.
inline std::vector<LabeledImage> augment_flips(const LabeledImage& img) {
  return {detail::relabel(img, flip_horizontal(img.image), "#fh"),
          detail::relabel(img, flip_vertical(img.image), "#fv"),
          detail::relabel(img, flip_vertical(flip_horizontal(img.image)), "#fhv")};
}

/// 90, 180 and 270 degrees clockwise.
inline std::vector<LabeledImage> augment_rotations(const LabeledImage& img) {
  return {detail::relabel(img, rotate_quarter_turns(img.image, 1), "#r90"),
          detail::relabel(img, rotate_quarter_turns(img.image, 2), "#r180"),
          detail::relabel(img, rotate_quarter_turns(img.image, 3), "#r270")};
}

struct AugmentationPlan {
  bool brightness = false;
  bool flips = false;
  bool rotations = false;

  static AugmentationPlan none() { return {}; }
  static AugmentationPlan combined() { return {true, true, true}; }

  std::size_t expansion_factor() const {
    return (brightness ? 4u : 1u) * (flips ? 4u : 1u) * (rotations ? 4u : 1u);
  }

  /// True when every family enabled here is also enabled in other.
  bool subset_of(const AugmentationPlan& other) const {
    return (!brightness || other.brightness) && (!flips || other.flips) && (!rotations || other.rotations);
  }

  AugmentationPlan united(const AugmentationPlan& other) const {
    return {brightness || other.brightness, flips || other.flips, rotations || other.rotations};
  }

  friend bool operator==(const AugmentationPlan&, const AugmentationPlan&) = default;
};

/// Offline expansion: every image is replaced by the Cartesian composition
/// brightness x flip x rotation of the enabled families, each family
/// contributing the identity plus its three variants. Output is image-major.
inline Dataset expand(const Dataset& ds, const AugmentationPlan& plan) {
  Dataset out{{}, ds.provenance};
  out.images.reserve(ds.size() * plan.expansion_factor());
  auto with_identity = [](const LabeledImage& im, bool enabled, auto family) {
    std::vector<LabeledImage> v{im};
    if (enabled) {
      auto extra = family(im);
      v.insert(v.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
    }
    return v;
  };
  for (const auto& im : ds.images) {
    for (const auto& b : with_identity(im, plan.brightness, augment_brightness)) {
      for (const auto& f : with_identity(b, plan.flips, augment_flips)) {
        auto rs = with_identity(f, plan.rotations, augment_rotations);
        out.images.insert(out.images.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
      }
    }
  }
  return out;
}

/// Positions, in expand(ds, super), of the images that make up
/// expand(ds, sub), in the same order. ds has `count` images.
inline std::vector<std::size_t> expansion_subset(std::size_t count, const AugmentationPlan& super,
                                                 const AugmentationPlan& sub) {
  if (!sub.subset_of(super)) throw ConfigError("augmentation plan is not a subset of the expanded plan");
  const std::size_t fs = super.flips ? 4 : 1, rs = super.rotations ? 4 : 1, per = super.expansion_factor();
  std::vector<std::size_t> out;
  out.reserve(count * sub.expansion_factor());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t b = 0; b < (sub.brightness ? 4u : 1u); ++b)
      for (std::size_t f = 0; f < (sub.flips ? 4u : 1u); ++f)
        for (std::size_t r = 0; r < (sub.rotations ? 4u : 1u); ++r) out.push_back(i * per + (b * fs + f) * rs + r);
  return out;
}

}  // namespace ssdr
