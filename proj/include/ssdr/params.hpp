#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssdr/tensor.hpp"

namespace ssdr {

template <class T>
struct Param {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;
  bool buffer = false;  // running state updated by forward, never by the optimizer
};

/// Named parameters in insertion order. Each entry owns a gradient slot of
/// the same shape as its value.
template <class T>
class BasicParamStore {
 public:
  using Entry = std::pair<std::string, Param<T>>;

  Param<T>& add(std::string name, BasicTensor<T> value, bool trainable = true) {
    if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    BasicTensor<T> grad(value.shape());
    entries_.emplace_back(std::move(name), Param<T>{std::move(value), std::move(grad), trainable, false});
    return entries_.back().second;
  }

  Param<T>& add_buffer(std::string name, BasicTensor<T> value) {
    auto& p = add(std::move(name), std::move(value), false);
    p.buffer = true;
    return p;
  }

  Param<T>* find(std::string_view name) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
    return it == entries_.end() ? nullptr : &it->second;
  }
  const Param<T>* find(std::string_view name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
    return it == entries_.end() ? nullptr : &it->second;
  }

  Param<T>& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("no parameter named '" + std::string(name) + "'");
  }
  const Param<T>& at(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ConfigError("no parameter named '" + std::string(name) + "'");
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void set_trainable(bool trainable) {
    for (auto& [name, p] : entries_) p.trainable = trainable && !p.buffer;
  }

  void zero_grad() {
    for (auto& [name, p] : entries_) p.grad.fill(T{0});
  }

  /// Total elements across parameters with the trainable flag set.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.trainable ? p.value.size() : 0;
    return n;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
  }

  /// Moves every entry of other into this store; names must not collide.
  void merge(BasicParamStore other) {
    for (auto& [name, p] : other.entries_) {
      if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
      entries_.emplace_back(std::move(name), std::move(p));
    }
  }

  template <class U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& [name, p] : entries_) {
      auto& q = out.add(name, p.value.template cast<U>(), p.trainable);
      q.buffer = p.buffer;
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

using ParamStore = BasicParamStore<float>;

}  // namespace ssdr
