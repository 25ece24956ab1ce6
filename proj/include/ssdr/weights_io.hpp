#pragma once

// SSDR weight container, little-endian throughout:
//   "SSDR" | u32 version = 1 | u32 tensor_count
//   per tensor: u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f32 data[prod(dims)]

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdr/network.hpp"
#include "ssdr/params.hpp"
#include "ssdr/tensor.hpp"

namespace ssdr {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline constexpr char kContainerMagic[4] = {'S', 'S', 'D', 'R'};
inline constexpr std::uint32_t kContainerVersion = 1;

class WeightsError : public Error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, Truncated, UnknownTensor, MissingTensor, ShapeMismatch, Duplicate };

  WeightsError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

template <class U>
U byteswap(U v) {
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  std::reverse(b, b + sizeof(U));
  std::memcpy(&v, b, sizeof(U));
  return v;
}

template <class U>
void put_le(std::string& out, U v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

class ByteReader {
 public:
  ByteReader(std::span<const char> bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    return v;
  }

  std::span<const char> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw WeightsError(WeightsError::Kind::Truncated,
                         path_ + ": truncated at byte " + std::to_string(pos_) + " (needed " + std::to_string(n) +
                             " more, " + std::to_string(bytes_.size() - pos_) + " available)");
    }
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace detail

inline std::string encode_container(std::span<const NamedTensor> tensors) {
  std::string out(kContainerMagic, 4);
  detail::put_le(out, kContainerVersion);
  detail::put_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le(out, static_cast<std::uint64_t>(d));
    for (float v : t.data()) detail::put_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline std::vector<NamedTensor> decode_container(std::span<const char> bytes, const std::string& path = "<memory>") {
  detail::ByteReader in(bytes, path);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) {
    throw WeightsError(WeightsError::Kind::BadMagic, path + ": bad magic (not an SSDR container)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw WeightsError(WeightsError::Kind::BadVersion, path + ": unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    auto name_bytes = in.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto ndim = in.get<std::uint32_t>();
    if (ndim == 0 || ndim > Shape::kMaxRank) {
      throw WeightsError(WeightsError::Kind::ShapeMismatch,
                         path + ": tensor '" + name + "' has unsupported rank " + std::to_string(ndim));
    }
    std::vector<std::size_t> dims(ndim);
    std::uint64_t total = 1;
    for (auto& d : dims) {
      const auto v = in.get<std::uint64_t>();
      if (v == 0 || v > in.remaining()) {
        throw WeightsError(v == 0 ? WeightsError::Kind::ShapeMismatch : WeightsError::Kind::Truncated,
                           path + ": tensor '" + name + "' has invalid extent " + std::to_string(v));
      }
      d = static_cast<std::size_t>(v);
      total *= v;  // v <= remaining, so the running product stays far from overflow
      if (total > in.remaining() / 4) {
        throw WeightsError(WeightsError::Kind::Truncated, path + ": tensor '" + name + "' data truncated");
      }
    }
    auto raw = in.take(static_cast<std::size_t>(total) * 4);
    std::vector<float> data(static_cast<std::size_t>(total));
    for (std::size_t k = 0; k < data.size(); ++k) {
      std::uint32_t u;
      std::memcpy(&u, raw.data() + 4 * k, 4);
      if constexpr (std::endian::native == std::endian::big) u = detail::byteswap(u);
      data[k] = std::bit_cast<float>(u);
    }
    for (const auto& prev : out) {
      if (prev.name == name) {
        throw WeightsError(WeightsError::Kind::Duplicate, path + ": duplicate tensor '" + name + "'");
      }
    }
    out.push_back({std::move(name), Tensor(Shape(std::span<const std::size_t>(dims)), std::move(data))});
  }
  if (!in.done()) {
    throw WeightsError(WeightsError::Kind::Truncated,
                       path + ": " + std::to_string(in.remaining()) + " trailing bytes after last tensor");
  }
  return out;
}

inline void write_container(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const std::string bytes = encode_container(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WeightsError(WeightsError::Kind::Io, path.string() + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw WeightsError(WeightsError::Kind::Io, path.string() + ": write failed");
}

inline std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightsError(WeightsError::Kind::Io, path.string() + ": cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path.string());
}

inline void save_weights(const ParamStore& params, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  tensors.reserve(params.size());
  for (const auto& [name, p] : params) tensors.push_back({name, p.value});
  write_container(path, tensors);
}

/// Loads a container whose tensors must be exactly the parameters of the
/// given networks, with matching shapes. With `frozen` set, every learnable
/// parameter loads with trainable = false.
inline ParamStore load_weights(const std::filesystem::path& path, std::span<const NetworkSpec* const> specs,
                               bool frozen = false) {
  auto tensors = read_container(path);
  std::vector<ParamShape> expected;
  for (const auto* s : specs) {
    auto ps = s->param_shapes();
    expected.insert(expected.end(), ps.begin(), ps.end());
  }
  for (const auto& t : tensors) {
    if (std::none_of(expected.begin(), expected.end(), [&](const ParamShape& e) { return e.name == t.name; })) {
      throw WeightsError(WeightsError::Kind::UnknownTensor, path.string() + ": unknown tensor '" + t.name + "'");
    }
  }
  ParamStore out;
  for (const auto& want : expected) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == want.name; });
    if (it == tensors.end()) {
      throw WeightsError(WeightsError::Kind::MissingTensor, path.string() + ": missing tensor '" + want.name + "'");
    }
    if (!(it->tensor.shape() == want.shape)) {
      throw WeightsError(WeightsError::Kind::ShapeMismatch, path.string() + ": tensor '" + want.name + "' has shape " +
                                                                it->tensor.shape().str() + ", expected " +
                                                                want.shape.str());
    }
    if (want.buffer) {
      out.add_buffer(want.name, std::move(it->tensor));
    } else {
      out.add(want.name, std::move(it->tensor), !frozen);
    }
  }
  return out;
}

inline ParamStore load_weights(const std::filesystem::path& path, const NetworkSpec& spec, bool frozen = false) {
  const NetworkSpec* specs[] = {&spec};
  return load_weights(path, specs, frozen);
}

}  // namespace ssdr
