#pragma once

#include <fcntl.h>
#include <sys/mman.h>
#include <unistd.h>

#include <cstddef>
#include <cstring>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdr/image.hpp"
#include "ssdr/network.hpp"
#include "ssdr/params.hpp"
#include "ssdr/preprocess.hpp"
#include "ssdr/rng.hpp"
#include "ssdr/weights_io.hpp"

namespace ssdr {

/// Indexed training/evaluation inputs with labels.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  /// Per-sample shape [C, H, W].
  virtual Shape sample_shape() const = 0;
  virtual void copy_sample(std::size_t i, std::span<float> dst) const = 0;

  std::vector<int> labels() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = label(i);
    return out;
  }
};

/// Stacks the selected samples into an [N, C, H, W] batch.
inline Tensor gather(const SampleSource& src, std::span<const std::size_t> idx) {
  const Shape s = src.sample_shape();
  const std::size_t per = s.numel();
  Tensor t(Shape{idx.size(), s[0], s[1], s[2]});
  parallel_for(idx.size(), [&](std::size_t k) { src.copy_sample(idx[k], t.data().subspan(k * per, per)); });
  return t;
}

/// Preprocesses dataset images on demand (network input [3, 224, 224]).
class ImageSource final : public SampleSource {
 public:
  explicit ImageSource(const Dataset& ds) : ds_(&ds) {}
  std::size_t size() const override { return ds_->size(); }
  int label(std::size_t i) const override { return ds_->images[i].label; }
  Shape sample_shape() const override { return Shape{3, kNetworkInputSide, kNetworkInputSide}; }
  void copy_sample(std::size_t i, std::span<float> dst) const override { preprocess_into(ds_->images[i].image, dst); }

 private:
  const Dataset* ds_;
};

/// Fixed-shape float storage, either on the heap or in an unlinked
/// memory-mapped temporary file so that large banks can be paged out.
class FloatStorage {
 public:
  FloatStorage() = default;
  FloatStorage(std::size_t count, const std::filesystem::path& spill_dir) : size_(count) {
    if (spill_dir.empty() || count == 0) {
      heap_.assign(count, 0.0f);
      data_ = heap_.data();
      return;
    }
    std::filesystem::create_directories(spill_dir);
    std::string tmpl = (spill_dir / "ssdr-bank-XXXXXX").string();
    const int fd = ::mkstemp(tmpl.data());
    if (fd < 0) throw DataError(tmpl + ": cannot create spill file");
    ::unlink(tmpl.c_str());
    const std::size_t bytes = count * sizeof(float);
    if (::ftruncate(fd, static_cast<off_t>(bytes)) != 0) {
      ::close(fd);
      throw DataError(tmpl + ": cannot size spill file");
    }
    void* p = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    ::close(fd);
    if (p == MAP_FAILED) throw DataError(tmpl + ": mmap failed");
    data_ = static_cast<float*>(p);
    mapped_ = true;
  }
  FloatStorage(const FloatStorage&) = delete;
  FloatStorage& operator=(const FloatStorage&) = delete;
  FloatStorage(FloatStorage&& o) noexcept { *this = std::move(o); }
  FloatStorage& operator=(FloatStorage&& o) noexcept {
    if (this != &o) {
      release();
      heap_ = std::move(o.heap_);
      size_ = std::exchange(o.size_, 0);
      mapped_ = std::exchange(o.mapped_, false);
      data_ = mapped_ ? std::exchange(o.data_, nullptr) : heap_.data();
      o.data_ = nullptr;
    }
    return *this;
  }
  ~FloatStorage() { release(); }

  float* data() { return data_; }
  const float* data() const { return data_; }
  std::size_t size() const { return size_; }

 private:
  void release() {
    if (mapped_ && data_) ::munmap(data_, size_ * sizeof(float));
    mapped_ = false;
    data_ = nullptr;
  }

  std::vector<float> heap_;
  float* data_ = nullptr;
  std::size_t size_ = 0;
  bool mapped_ = false;
};

/// Precomputed extractor outputs with labels.
class FeatureBank final : public SampleSource {
 public:
  FeatureBank(Shape sample_shape, std::vector<int> labels, const std::filesystem::path& spill_dir = {})
      : shape_(sample_shape), labels_(std::move(labels)), storage_(labels_.size() * sample_shape.numel(), spill_dir) {}

  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t i) const override { return labels_[i]; }
  Shape sample_shape() const override { return shape_; }
  void copy_sample(std::size_t i, std::span<float> dst) const override {
    const auto s = sample(i);
    std::copy(s.begin(), s.end(), dst.begin());
  }

  std::span<float> sample(std::size_t i) { return {storage_.data() + i * shape_.numel(), shape_.numel()}; }
  std::span<const float> sample(std::size_t i) const {
    return {storage_.data() + i * shape_.numel(), shape_.numel()};
  }

  /// Container records feat_<i> and label_<i>.
  void save(const std::filesystem::path& path) const {
    std::vector<NamedTensor> records;
    records.reserve(2 * size());
    for (std::size_t i = 0; i < size(); ++i) {
      const auto s = sample(i);
      records.push_back({"feat_" + std::to_string(i), Tensor(shape_, std::vector<float>(s.begin(), s.end()))});
      records.push_back({"label_" + std::to_string(i), Tensor(Shape{1}, {static_cast<float>(labels_[i])})});
    }
    write_container(path, records);
  }

  static FeatureBank load(const std::filesystem::path& path, const std::filesystem::path& spill_dir = {}) {
    auto records = read_container(path);
    if (records.size() % 2 != 0 || records.empty()) {
      throw WeightsError(WeightsError::Kind::MissingTensor, path.string() + ": expected feat_/label_ record pairs");
    }
    const std::size_t n = records.size() / 2;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = records[2 * i + 1];
      if (l.name != "label_" + std::to_string(i) || l.tensor.size() != 1) {
        throw WeightsError(WeightsError::Kind::UnknownTensor, path.string() + ": unexpected record '" + l.name + "'");
      }
      labels[i] = static_cast<int>(l.tensor[0]);
    }
    FeatureBank bank(records[0].tensor.shape(), std::move(labels), spill_dir);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& f = records[2 * i];
      if (f.name != "feat_" + std::to_string(i)) {
        throw WeightsError(WeightsError::Kind::UnknownTensor, path.string() + ": unexpected record '" + f.name + "'");
      }
      if (!(f.tensor.shape() == bank.shape_)) {
        throw WeightsError(WeightsError::Kind::ShapeMismatch, path.string() + ": record '" + f.name + "' has shape " +
                                                                  f.tensor.shape().str());
      }
      std::copy(f.tensor.data().begin(), f.tensor.data().end(), bank.sample(i).begin());
    }
    return bank;
  }

 private:
  Shape shape_;
  std::vector<int> labels_;
  FloatStorage storage_;
};

/// Runs the frozen extractor (eval mode) over images in batches.
inline FeatureBank extract_features(const NetworkSpec& extractor, const ParamStore& params,
                                    std::span<const LabeledImage> images, const std::filesystem::path& spill_dir = {},
                                    std::size_t batch = 8) {
  std::vector<int> labels;
  for (const auto& im : images) labels.push_back(im.label);
  const Shape out = extractor.output_shape(1);
  FeatureBank bank(Shape{out[1], out[2], out[3]}, std::move(labels), spill_dir);
  ParamStore local = params;  // eval forward does not mutate, but takes a mutable store
  Rng unused(0);
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const std::size_t count = std::min(batch, images.size() - start);
    std::vector<const LabeledImage*> ptrs;
    for (std::size_t k = 0; k < count; ++k) ptrs.push_back(&images[start + k]);
    auto y = forward(extractor, local, preprocess_batch(ptrs), Mode::Eval, unused).output;
    const std::size_t per = bank.sample_shape().numel();
    for (std::size_t k = 0; k < count; ++k) {
      std::copy_n(y.ptr() + k * per, per, bank.sample(start + k).begin());
    }
  }
  return bank;
}

/// Extractor plus classifier. In transfer mode inputs are cached extractor
/// features and only the classifier runs; params then hold the classifier
/// alone. In scratch mode inputs are images and params hold both networks.
struct Model {
  NetworkSpec extractor = build_feature_extractor();
  NetworkSpec classifier = build_classifier();
  ParamStore params;
  bool transfer = true;
};

struct ModelTapes {
  Tape<float> extractor;
  Tape<float> classifier;
};

inline Tensor model_forward(Model& m, Tensor x, Mode mode, Rng& rng, ModelTapes* tapes = nullptr) {
  if (!m.transfer) {
    auto fe = forward(m.extractor, m.params, std::move(x), mode, rng);
    x = std::move(fe.output);
    if (tapes) tapes->extractor = std::move(fe.tape);
  }
  auto fc = forward(m.classifier, m.params, std::move(x), mode, rng);
  if (tapes) tapes->classifier = std::move(fc.tape);
  return std::move(fc.output);
}

inline void model_backward(Model& m, const ModelTapes& tapes, Tensor grad_logits) {
  bool extractor_trainable = false;
  if (!m.transfer) {
    for (const auto& p : m.extractor.param_shapes()) extractor_trainable |= m.params.at(p.name).trainable;
  }
  auto gx = backward(m.classifier, m.params, tapes.classifier, std::move(grad_logits), extractor_trainable);
  if (extractor_trainable) backward(m.extractor, m.params, tapes.extractor, std::move(gx));
}

}  // namespace ssdr
