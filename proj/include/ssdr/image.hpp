#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssdr/tensor.hpp"

namespace ssdr {

inline constexpr std::size_t kImageSide = 200;

/// Label ids follow this (alphabetical) order.
inline constexpr std::array<std::string_view, 6> kClassNames = {
    "crazing", "inclusion", "patches", "pitted_surface", "rolled-in_scale", "scratches"};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct LabeledImage {
  GrayImage image;
  int label = 0;
  std::string source;  // file path or generator id
};

struct Dataset {
  std::vector<LabeledImage> images;
  std::string provenance;

  std::size_t size() const { return images.size(); }

  std::array<std::size_t, kClassNames.size()> class_counts() const {
    std::array<std::size_t, kClassNames.size()> counts{};
    for (const auto& im : images) ++counts.at(static_cast<std::size_t>(im.label));
    return counts;
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(im.label);
    return out;
  }
};

inline void check_labeled_image(const LabeledImage& im) {
  if (im.image.height != kImageSide || im.image.width != kImageSide) {
    throw DataError(im.source + ": image is " + std::to_string(im.image.width) + "x" +
                    std::to_string(im.image.height) + ", expected 200x200");
  }
  if (im.label < 0 || static_cast<std::size_t>(im.label) >= kClassNames.size()) {
    throw DataError(im.source + ": label " + std::to_string(im.label) + " out of range");
  }
}

}  // namespace ssdr
