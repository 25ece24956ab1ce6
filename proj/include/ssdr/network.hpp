#pragma once

#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssdr/kernels/activation.hpp"
#include "ssdr/kernels/batchnorm.hpp"
#include "ssdr/kernels/conv.hpp"
#include "ssdr/kernels/pooling.hpp"
#include "ssdr/params.hpp"
#include "ssdr/rng.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

enum class LayerKind { Conv, Relu, MaxPool, BatchNorm, Dropout, GlobalAvgPool };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  double keep_prob = 1.0;

  static LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k) {
    return {LayerKind::Conv, std::move(name), in, out, k, 1.0};
  }
  static LayerSpec relu(std::string name) { return {LayerKind::Relu, std::move(name)}; }
  static LayerSpec maxpool(std::string name) { return {LayerKind::MaxPool, std::move(name)}; }
  static LayerSpec batchnorm(std::string name, std::size_t c) {
    return {LayerKind::BatchNorm, std::move(name), c, c};
  }
  static LayerSpec dropout(std::string name, double keep) {
    return {LayerKind::Dropout, std::move(name), 0, 0, 0, keep};
  }
  static LayerSpec global_avg_pool(std::string name) { return {LayerKind::GlobalAvgPool, std::move(name)}; }

  /// Shape-preserving zero padding for odd kernels.
  std::size_t padding() const { return (kernel - 1) / 2; }
  bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::BatchNorm; }
};

struct ParamShape {
  std::string name;
  Shape shape;
  bool buffer = false;
};

/// Ordered layer list plus the per-image input shape [C, H, W].
struct NetworkSpec {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;

  /// Names unique, channel counts chained, pooling extents divisible.
  void validate() const {
    require_rank(input_shape, 3, "network input shape");
    std::set<std::string> seen;
    std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    bool flat = false;
    for (const auto& l : layers) {
      if (!seen.insert(l.name).second) throw ConfigError("duplicate layer name '" + l.name + "'");
      if (flat) throw ConfigError("layer '" + l.name + "' follows global pooling");
      switch (l.kind) {
        case LayerKind::Conv:
          if (l.in_channels != c) throw ConfigError("layer '" + l.name + "' expects " +
                                                    std::to_string(l.in_channels) + " channels, gets " +
                                                    std::to_string(c));
          if (l.kernel % 2 == 0) throw ConfigError("layer '" + l.name + "' needs an odd kernel");
          c = l.out_channels;
          break;
        case LayerKind::BatchNorm:
          if (l.in_channels != c) throw ConfigError("layer '" + l.name + "' channel mismatch");
          break;
        case LayerKind::MaxPool:
          if (h % 2 || w % 2) throw ConfigError("layer '" + l.name + "' receives odd extents");
          h /= 2;
          w /= 2;
          break;
        case LayerKind::Dropout: check_keep_prob(l.keep_prob); break;
        case LayerKind::GlobalAvgPool: flat = true; break;
        case LayerKind::Relu: break;
      }
    }
  }

  /// Output shape for a batch of n images.
  Shape output_shape(std::size_t n) const {
    std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    for (const auto& l : layers) {
      if (l.kind == LayerKind::Conv) c = l.out_channels;
      if (l.kind == LayerKind::MaxPool) h /= 2, w /= 2;
      if (l.kind == LayerKind::GlobalAvgPool) return Shape{n, c};
    }
    return Shape{n, c, h, w};
  }

  std::size_t index_of(std::string_view layer) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].name == layer) return i;
    }
    throw ConfigError("network '" + name + "' has no layer '" + std::string(layer) + "'");
  }

  std::vector<ParamShape> param_shapes() const {
    std::vector<ParamShape> out;
    for (const auto& l : layers) {
      if (l.kind == LayerKind::Conv) {
        out.push_back({l.name + ".weight", Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}});
        out.push_back({l.name + ".bias", Shape{l.out_channels}});
      } else if (l.kind == LayerKind::BatchNorm) {
        out.push_back({l.name + ".gamma", Shape{l.in_channels}});
        out.push_back({l.name + ".beta", Shape{l.in_channels}});
        out.push_back({l.name + ".running_mean", Shape{l.in_channels}, true});
        out.push_back({l.name + ".running_var", Shape{l.in_channels}, true});
      }
    }
    return out;
  }

  /// Learnable element count (running statistics excluded).
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : param_shapes()) n += p.buffer ? 0 : p.shape.numel();
    return n;
  }

  std::size_t count(LayerKind kind) const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kind == kind;
    return n;
  }
};

/// VGG16 convolution blocks 1-3 including the third max pool. The default
/// 224x224 input yields [N, 256, 28, 28].
inline NetworkSpec build_feature_extractor(std::size_t side = 224) {
  NetworkSpec s{"extractor", Shape{3, side, side}, {}};
  const struct {
    int block, index;
    std::size_t in, out;
  } convs[] = {{1, 1, 3, 64},    {1, 2, 64, 64},   {2, 1, 64, 128},  {2, 2, 128, 128},
               {3, 1, 128, 256}, {3, 2, 256, 256}, {3, 3, 256, 256}};
  int block = 1;
  for (const auto& c : convs) {
    if (c.block != block) {
      s.layers.push_back(LayerSpec::maxpool("pool" + std::to_string(block)));
      block = c.block;
    }
    const std::string id = std::to_string(c.block) + "_" + std::to_string(c.index);
    s.layers.push_back(LayerSpec::conv("conv" + id, c.in, c.out, 3));
    s.layers.push_back(LayerSpec::relu("relu" + id));
  }
  s.layers.push_back(LayerSpec::maxpool("pool3"));
  s.validate();
  return s;
}

inline constexpr double kFirstDropoutKeep = 0.6;
inline constexpr double kSecondDropoutKeep = 0.8;
inline constexpr std::size_t kNumClasses = 6;

/// Batch norm on the incoming feature maps, two conv/ReLU/dropout stages,
/// a 1x1 conv to class scores and global average pooling. No fully
/// connected layer.
inline NetworkSpec build_classifier(std::size_t side = 28) {
  NetworkSpec s{"classifier", Shape{256, side, side}, {}};
  s.layers = {
      LayerSpec::batchnorm("cls.bn", 256),
      LayerSpec::conv("cls.conv1", 256, 128, 3),
      LayerSpec::relu("cls.relu1"),
      LayerSpec::dropout("cls.drop1", kFirstDropoutKeep),
      LayerSpec::conv("cls.conv2", 128, 64, 3),
      LayerSpec::relu("cls.relu2"),
      LayerSpec::dropout("cls.drop2", kSecondDropoutKeep),
      LayerSpec::conv("cls.conv3", 64, kNumClasses, 1),
      LayerSpec::global_avg_pool("cls.gap"),
  };
  s.validate();
  return s;
}

/// What each layer's backward needs from the forward pass.
template <class T>
struct LayerRecord {
  BasicTensor<T> input;
  PoolCache pool;
  DropoutMask mask;
};

template <class T>
struct Tape {
  Mode mode = Mode::Eval;
  std::vector<LayerRecord<T>> records;  // one per executed layer; empty in eval mode
};

template <class T>
struct ForwardResult {
  BasicTensor<T> output;
  Tape<T> tape;
};

namespace detail {

template <class T>
BatchNormParams<T> bn_params(BasicParamStore<T>& params, const std::string& layer) {
  return {params.at(layer + ".gamma").value, params.at(layer + ".beta").value,
          params.at(layer + ".running_mean").value, params.at(layer + ".running_var").value};
}

template <class T>
ConvParams<T> conv_params(const BasicParamStore<T>& params, const LayerSpec& l) {
  return {params.at(l.name + ".weight").value, params.at(l.name + ".bias").value, 1, l.padding()};
}

}  // namespace detail

/// Applies layers [0, stop] in order (all layers by default). Train mode
/// records a tape and updates batch-norm running statistics; eval mode uses
/// running statistics and identity dropout.
template <class T>
ForwardResult<T> forward(const NetworkSpec& spec, BasicParamStore<T>& params, BasicTensor<T> x, Mode mode, Rng& rng,
                         std::size_t stop = std::numeric_limits<std::size_t>::max()) {
  require_rank(x.shape(), 4, "network input");
  const Shape& in = spec.input_shape;
  if (x.dim(1) != in[0] || x.dim(2) != in[1] || x.dim(3) != in[2]) {
    throw ShapeError("network '" + spec.name + "' expects [N, " + std::to_string(in[0]) + ", " +
                     std::to_string(in[1]) + ", " + std::to_string(in[2]) + "], got " + x.shape().str());
  }
  ForwardResult<T> r;
  r.tape.mode = mode;
  const std::size_t last = std::min(stop, spec.layers.size() - 1);
  for (std::size_t i = 0; i <= last; ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerRecord<T> rec;
    try {
      switch (l.kind) {
        case LayerKind::Conv: {
          auto y = conv2d_forward(x, detail::conv_params(params, l));
          rec.input = std::move(x);
          x = std::move(y);
          break;
        }
        case LayerKind::Relu: {
          auto y = relu_forward(x);
          rec.input = std::move(x);
          x = std::move(y);
          break;
        }
        case LayerKind::MaxPool: {
          auto pr = maxpool2d_forward(x);
          rec.pool = std::move(pr.cache);
          x = std::move(pr.output);
          break;
        }
        case LayerKind::BatchNorm: {
          auto y = batchnorm_forward(x, detail::bn_params(params, l.name), mode);
          rec.input = std::move(x);
          x = std::move(y);
          break;
        }
        case LayerKind::Dropout: {
          auto dr = dropout_forward(x, l.keep_prob, mode, rng);
          rec.mask = std::move(dr.mask);
          x = std::move(dr.output);
          break;
        }
        case LayerKind::GlobalAvgPool: {
          auto y = global_avg_pool_forward(x);
          rec.pool.input_shape = x.shape();
          x = std::move(y);
          break;
        }
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
    if (mode == Mode::Train) r.tape.records.push_back(std::move(rec));
  }
  r.output = std::move(x);
  return r;
}

/// Accumulates gradients of trainable parameters into their slots. Layers
/// below the lowest trainable one are skipped unless the input gradient is
/// requested, in which case it is returned.
template <class T>
BasicTensor<T> backward(const NetworkSpec& spec, BasicParamStore<T>& params, const Tape<T>& tape,
                        BasicTensor<T> grad, bool need_input_grad = false) {
  if (tape.mode != Mode::Train || tape.records.size() != spec.layers.size()) {
    throw ShapeError("backward: tape of " + std::to_string(tape.records.size()) +
                     " train-mode records does not match network '" + spec.name + "' with " +
                     std::to_string(spec.layers.size()) + " layers");
  }
  auto trainable = [&](const LayerSpec& l) {
    if (!l.has_params()) return false;
    const char* key = l.kind == LayerKind::Conv ? ".weight" : ".gamma";
    return params.at(l.name + key).trainable;
  };
  std::size_t lowest = spec.layers.size();
  if (need_input_grad) {
    lowest = 0;
  } else {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (trainable(spec.layers[i])) {
        lowest = i;
        break;
      }
    }
  }
  for (std::size_t i = spec.layers.size(); i-- > lowest;) {
    const LayerSpec& l = spec.layers[i];
    const LayerRecord<T>& rec = tape.records[i];
    const bool want_dx = i > lowest || need_input_grad;
    try {
      switch (l.kind) {
        case LayerKind::Conv: {
          const bool train_this = trainable(l);
          auto g = conv2d_backward(rec.input, detail::conv_params(params, l), grad, want_dx, train_this);
          if (train_this) {
            auto& w = params.at(l.name + ".weight").grad;
            for (std::size_t k = 0; k < w.size(); ++k) w[k] += g.grad_weight[k];
            auto& b = params.at(l.name + ".bias").grad;
            for (std::size_t k = 0; k < b.size(); ++k) b[k] += g.grad_bias[k];
          }
          grad = std::move(g.grad_x);
          break;
        }
        case LayerKind::Relu: grad = relu_backward(rec.input, grad); break;
        case LayerKind::MaxPool: grad = maxpool2d_backward(grad, rec.pool, rec.pool.input_shape); break;
        case LayerKind::BatchNorm: {
          auto g = batchnorm_backward(rec.input, detail::bn_params(params, l.name), grad);
          if (trainable(l)) {
            auto& gg = params.at(l.name + ".gamma").grad;
            auto& gb = params.at(l.name + ".beta").grad;
            for (std::size_t k = 0; k < gg.size(); ++k) gg[k] += g.grad_gamma[k], gb[k] += g.grad_beta[k];
          }
          grad = std::move(g.grad_x);
          break;
        }
        case LayerKind::Dropout: grad = dropout_backward(rec.mask, l.keep_prob, grad); break;
        case LayerKind::GlobalAvgPool:
          grad = global_avg_pool_backward(grad, rec.pool.input_shape[2], rec.pool.input_shape[3]);
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
  }
  return need_input_grad ? grad : BasicTensor<T>{};
}

}  // namespace ssdr
