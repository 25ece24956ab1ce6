#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ssdr/image.hpp"
#include "ssdr/parallel.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

inline constexpr std::size_t kNetworkInputSide = 224;

/// Bilinear resize with half-pixel centres: s = (d + 0.5) * src/dst - 0.5,
/// clamped to the valid source range.
inline std::vector<float> resize_bilinear(std::span<const float> src, std::size_t src_h, std::size_t src_w,
                                          std::size_t dst_h, std::size_t dst_w) {
  struct Tap {
    std::size_t i0, i1;
    float frac;
  };
  auto taps = [](std::size_t src_n, std::size_t dst_n) {
    std::vector<Tap> t(dst_n);
    const double scale = static_cast<double>(src_n) / static_cast<double>(dst_n);
    for (std::size_t d = 0; d < dst_n; ++d) {
      const double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(src_n - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      t[d] = {i0, std::min(i0 + 1, src_n - 1), static_cast<float>(s - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(src_h, dst_h), tx = taps(src_w, dst_w);
  std::vector<float> out(dst_h * dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const float* r0 = src.data() + ty[y].i0 * src_w;
    const float* r1 = src.data() + ty[y].i1 * src_w;
    const float fy = ty[y].frac;
    for (std::size_t x = 0; x < dst_w; ++x) {
      const auto [x0, x1, fx] = tx[x];
      const float top = r0[x0] + (r0[x1] - r0[x0]) * fx;
      const float bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
      out[y * dst_w + x] = top + (bottom - top) * fy;
    }
  }
  return out;
}

/// Writes the network input for one image into dst (3 * 224 * 224 floats):
/// mean-subtracted, resized to 224x224 and replicated into three channels.
inline void preprocess_into(const GrayImage& img, std::span<float> dst) {
  const std::size_t plane = kNetworkInputSide * kNetworkInputSide;
  if (dst.size() != 3 * plane) throw ShapeError("preprocess: destination must hold 3x224x224 floats");
  double mean = 0.0;
  for (auto p : img.pixels) mean += p;
  mean /= static_cast<double>(img.pixels.size());
  std::vector<float> centred(img.pixels.size());
  for (std::size_t i = 0; i < centred.size(); ++i) centred[i] = static_cast<float>(img.pixels[i] - mean);
  const auto resized = resize_bilinear(centred, img.height, img.width, kNetworkInputSide, kNetworkInputSide);
  for (std::size_t c = 0; c < 3; ++c) std::copy(resized.begin(), resized.end(), dst.begin() + c * plane);
}

inline Tensor preprocess(const GrayImage& img) {
  Tensor t(Shape{3, kNetworkInputSide, kNetworkInputSide});
  preprocess_into(img, t.data());
  return t;
}

/// [N, 3, 224, 224] batch from a list of images.
inline Tensor preprocess_batch(std::span<const LabeledImage* const> images) {
  const std::size_t per = 3 * kNetworkInputSide * kNetworkInputSide;
  Tensor t(Shape{images.size(), 3, kNetworkInputSide, kNetworkInputSide});
  parallel_for(images.size(), [&](std::size_t i) { preprocess_into(images[i]->image, t.data().subspan(i * per, per)); });
  return t;
}

}  // namespace ssdr
