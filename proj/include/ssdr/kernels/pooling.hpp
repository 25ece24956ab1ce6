#pragma once

#include <cstddef>
#include <vector>

#include "ssdr/tensor.hpp"

namespace ssdr {

/// Flat input index of the selected maximum for every pooled output element.
struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;
};

template <class T>
struct MaxPoolResult {
  BasicTensor<T> output;
  PoolCache cache;
};

/// Ties go to the lowest flat input index.
template <class T>
MaxPoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, std::size_t window = 2, std::size_t stride = 2) {
  require_rank(x.shape(), 4, "maxpool2d input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window == 0 || stride == 0 || h < window || w < window || (h - window) % stride != 0 ||
      (w - window) % stride != 0) {
    throw ShapeError("maxpool2d: extents of " + x.shape().str() + " are not compatible with window " +
                     std::to_string(window) + " stride " + std::to_string(stride));
  }
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  MaxPoolResult<T> r{BasicTensor<T>(Shape{n, c, ho, wo}), PoolCache{x.shape(), {}}};
  r.cache.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * w + ox * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        r.output[o] = x[best];
        r.cache.argmax[o] = best;
      }
    }
  }
  return r;
}

template <class T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out, const PoolCache& cache, const Shape& input_shape) {
  if (!(cache.input_shape == input_shape)) {
    throw ShapeError("maxpool2d_backward: cache built for " + cache.input_shape.str() + ", not " +
                     input_shape.str());
  }
  if (grad_out.size() != cache.argmax.size()) {
    throw ShapeError("maxpool2d_backward: grad_out " + grad_out.shape().str() + " does not match cache");
  }
  BasicTensor<T> gx(input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) {
    if (cache.argmax[o] >= gx.size()) throw ShapeError("maxpool2d_backward: cache index out of range");
    gx[cache.argmax[o]] += grad_out[o];
  }
  return gx;
}

template <class T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  BasicTensor<T> out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    const T* src = x.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) s += src[i];
    out[p] = static_cast<T>(s / static_cast<double>(hw));
  }
  return out;
}

template <class T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, std::size_t h, std::size_t w) {
  require_rank(grad_out.shape(), 2, "global_avg_pool grad_out");
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), hw = h * w;
  BasicTensor<T> gx(Shape{n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T v = static_cast<T>(grad_out[p] / static_cast<T>(hw));
    std::fill(gx.ptr() + p * hw, gx.ptr() + (p + 1) * hw, v);
  }
  return gx;
}

}  // namespace ssdr
