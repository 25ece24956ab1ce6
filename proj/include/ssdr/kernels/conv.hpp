#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "ssdr/parallel.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

/// Borrowed convolution parameters: weight [C_out, C_in, K, K], bias [C_out].
template <class T>
struct ConvParams {
  const BasicTensor<T>& weight;
  const BasicTensor<T>& bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <class T>
struct ConvGrads {
  BasicTensor<T> grad_x;  // empty when not requested
  BasicTensor<T> grad_weight;
  BasicTensor<T> grad_bias;
};

namespace detail {

struct ConvGeometry {
  std::size_t n, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return h_out * w_out; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <class T>
ConvGeometry conv_geometry(const Shape& x, const ConvParams<T>& p) {
  require_rank(x, 4, "conv2d input");
  require_rank(p.weight.shape(), 4, "conv2d weight");
  const Shape& ws = p.weight.shape();
  if (ws[2] != ws[3]) throw ShapeError("conv2d: only square kernels are supported, got " + ws.str());
  if (x[1] != ws[1]) {
    throw ShapeError("conv2d: input " + x.str() + " has " + std::to_string(x[1]) +
                     " channels but weight " + ws.str() + " expects " + std::to_string(ws[1]));
  }
  if (p.bias.size() != ws[0]) {
    throw ShapeError("conv2d: bias length " + std::to_string(p.bias.size()) + " != C_out " +
                     std::to_string(ws[0]));
  }
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t k = ws[2];
  if (x[2] + 2 * p.padding < k || x[3] + 2 * p.padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + x.str());
  }
  ConvGeometry g{x[0], x[1], x[2], x[3], ws[0], k, p.stride, p.padding, 0, 0};
  g.h_out = (g.h + 2 * g.pad - k) / g.stride + 1;
  g.w_out = (g.w + 2 * g.pad - k) / g.stride + 1;
  return g;
}

// cols[(c*K + i)*K + j][oy*W_out + ox] = x[c][oy*s + i - pad][ox*s + j - pad], zero outside.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.k; ++i) {
      for (std::size_t j = 0; j < g.k; ++j) {
        T* row = cols + ((c * g.k + i) * g.k + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          T* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.w_out, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    T* plane = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.k; ++i) {
      for (std::size_t j = 0; j < g.k; ++j) {
        const T* row = cols + ((c * g.k + i) * g.k + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
std::vector<T>& scratch_buffer(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace detail

/// Direct 2D cross-correlation via patch-matrix expansion and GEMM, one image
/// per work item.
template <class T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& p) {
  const auto g = detail::conv_geometry(x.shape(), p);
  BasicTensor<T> out(Shape{g.n, g.c_out, g.h_out, g.w_out});
  const detail::ConstMatrixMap<T> weight(p.weight.ptr(), g.c_out, g.patch());
  parallel_for(g.n, [&](std::size_t n) {
    const T* xn = x.ptr() + n * g.c_in * g.h * g.w;
    const T* cols_ptr = xn;
    if (!g.is_pointwise()) {
      auto& buf = detail::scratch_buffer<T>(g.patch() * g.pixels());
      detail::im2col(xn, g, buf.data());
      cols_ptr = buf.data();
    }
    const detail::ConstMatrixMap<T> cols(cols_ptr, g.patch(), g.pixels());
    detail::MatrixMap<T> on(out.ptr() + n * g.c_out * g.pixels(), g.c_out, g.pixels());
    on.noalias() = weight * cols;
    for (std::size_t o = 0; o < g.c_out; ++o) on.row(o).array() += p.bias[o];
  });
  check_finite(out, "conv2d_forward");
  return out;
}

/// Exact gradients of conv2d_forward. Weight and bias gradients are formed per
/// image and summed in batch order. grad_x is skipped when need_grad_x is false,
/// and grad_weight/grad_bias when need_param_grads is false.
template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                             bool need_grad_x = true, bool need_param_grads = true) {
  const auto g = detail::conv_geometry(x.shape(), p);
  if (!(grad_out.shape() == Shape{g.n, g.c_out, g.h_out, g.w_out})) {
    throw ShapeError("conv2d_backward: grad_out " + grad_out.shape().str() + " does not match output " +
                     Shape{g.n, g.c_out, g.h_out, g.w_out}.str());
  }
  ConvGrads<T> r;
  if (need_grad_x) r.grad_x = BasicTensor<T>(x.shape());
  r.grad_weight = BasicTensor<T>(p.weight.shape());
  r.grad_bias = BasicTensor<T>(p.bias.shape());

  const std::size_t wsize = g.c_out * g.patch();
  std::vector<T> partial_w(need_param_grads ? g.n * wsize : 0);
  std::vector<double> partial_b(need_param_grads ? g.n * g.c_out : 0);
  const detail::ConstMatrixMap<T> weight(p.weight.ptr(), g.c_out, g.patch());

  parallel_for(g.n, [&](std::size_t n) {
    const detail::ConstMatrixMap<T> gout(grad_out.ptr() + n * g.c_out * g.pixels(), g.c_out, g.pixels());
    if (need_param_grads) {
      const T* xn = x.ptr() + n * g.c_in * g.h * g.w;
      const T* cols_ptr = xn;
      if (!g.is_pointwise()) {
        auto& buf = detail::scratch_buffer<T>(g.patch() * g.pixels());
        detail::im2col(xn, g, buf.data());
        cols_ptr = buf.data();
      }
      const detail::ConstMatrixMap<T> cols(cols_ptr, g.patch(), g.pixels());
      detail::MatrixMap<T> gw(partial_w.data() + n * wsize, g.c_out, g.patch());
      gw.noalias() = gout * cols.transpose();
      for (std::size_t o = 0; o < g.c_out; ++o) {
        double s = 0.0;
        const T* row = gout.data() + o * g.pixels();
        for (std::size_t i = 0; i < g.pixels(); ++i) s += row[i];
        partial_b[n * g.c_out + o] = s;
      }
    }
    if (need_grad_x) {
      T* gxn = r.grad_x.ptr() + n * g.c_in * g.h * g.w;
      if (g.is_pointwise()) {
        detail::MatrixMap<T> gx(gxn, g.c_in, g.pixels());
        gx.noalias() = weight.transpose() * gout;
      } else {
        std::vector<T> gcols(g.patch() * g.pixels());
        detail::MatrixMap<T> gc(gcols.data(), g.patch(), g.pixels());
        gc.noalias() = weight.transpose() * gout;
        detail::col2im(gcols.data(), g, gxn);
      }
    }
  });

  if (need_param_grads) {
    for (std::size_t n = 0; n < g.n; ++n) {
      const T* src = partial_w.data() + n * wsize;
      T* dst = r.grad_weight.ptr();
      for (std::size_t i = 0; i < wsize; ++i) dst[i] += src[i];
    }
    for (std::size_t o = 0; o < g.c_out; ++o) {
      double s = 0.0;
      for (std::size_t n = 0; n < g.n; ++n) s += partial_b[n * g.c_out + o];
      r.grad_bias[o] = static_cast<T>(s);
    }
  }
  return r;
}

}  // namespace ssdr
