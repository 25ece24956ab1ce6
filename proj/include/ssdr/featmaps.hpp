#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssdr/image.hpp"
#include "ssdr/image_io.hpp"
#include "ssdr/network.hpp"
#include "ssdr/preprocess.hpp"

namespace ssdr {

/// Per-channel min-max scaling to 0..255; a constant channel maps to 0.
inline GrayImage feature_map_to_gray(std::span<const float> channel, std::size_t h, std::size_t w) {
  GrayImage img(h, w);
  const auto [lo, hi] = std::minmax_element(channel.begin(), channel.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (!(range > 0.0)) return img;
  for (std::size_t i = 0; i < channel.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround((channel[i] - *lo) / range * 255.0));
  }
  return img;
}

/// Runs the extractor up to pool<after_pool> on one preprocessed image
/// [3, H, W] (or [1, 3, H, W]) and writes <after_pool>_<channel>.png per channel.
inline std::vector<std::filesystem::path> dump_feature_maps(const NetworkSpec& extractor, const ParamStore& params,
                                                            Tensor image, int after_pool,
                                                            const std::filesystem::path& out_dir) {
  if (after_pool < 1 || after_pool > 3) throw ConfigError("pool index must be 1, 2 or 3");
  if (image.rank() == 3) image.reshape(Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  ParamStore local = params;
  Rng unused(0);
  const auto stop = extractor.index_of("pool" + std::to_string(after_pool));
  auto maps = forward(extractor, local, std::move(image), Mode::Eval, unused, stop).output;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(out_dir.string() + ": " + ec.message());
  const std::size_t c = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  std::vector<std::filesystem::path> written;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto path = out_dir / (std::to_string(after_pool) + "_" + std::to_string(ch) + ".png");
    write_png(path, feature_map_to_gray(maps.data().subspan(ch * h * w, h * w), h, w));
    written.push_back(path);
  }
  return written;
}

}  // namespace ssdr
