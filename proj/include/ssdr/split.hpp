#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ssdr/image.hpp"
#include "ssdr/rng.hpp"

namespace ssdr {

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t per_class_train = 150;
  std::size_t per_class_test = 150;
};

namespace detail {
inline std::array<std::vector<std::size_t>, kClassNames.size()> indices_by_class(const Dataset& ds) {
  std::array<std::vector<std::size_t>, kClassNames.size()> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(static_cast<std::size_t>(ds.images[i].label)).push_back(i);
  return by_class;
}
}  // namespace detail

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Per class, a seeded shuffle sends the first per_class_train images to
/// train and the next per_class_test to test.
inline TrainTestSplit split(const Dataset& ds, const SplitSpec& spec) {
  TrainTestSplit r{{{}, ds.provenance + "[train]"}, {{}, ds.provenance + "[test]"}};
  const auto by_class = detail::indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto idx = by_class[c];
    if (idx.size() < spec.per_class_train + spec.per_class_test) {
      throw DataError("class '" + std::string(kClassNames[c]) + "' has " + std::to_string(idx.size()) +
                      " images, split needs " + std::to_string(spec.per_class_train + spec.per_class_test));
    }
    Rng rng = make_rng(spec.seed, "split", c);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < spec.per_class_train; ++k) r.train.images.push_back(ds.images[idx[k]]);
    for (std::size_t k = 0; k < spec.per_class_test; ++k) {
      r.test.images.push_back(ds.images[idx[spec.per_class_train + k]]);
    }
  }
  return r;
}

/// Seeded n-per-class subsample without replacement, as sorted indices into
/// ds. Selection is a prefix of a per-class shuffle, so for a fixed seed
/// smaller samples are subsets of larger ones.
inline std::vector<std::size_t> sample_indices_per_class(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  const auto by_class = detail::indices_by_class(ds);
  std::size_t smallest = ds.size();
  for (const auto& v : by_class) smallest = std::min(smallest, v.size());
  if (n < 1 || n > smallest) {
    throw ConfigError("images per class must lie in [1, " + std::to_string(smallest) + "], got " + std::to_string(n));
  }
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto idx = by_class[c];
    Rng rng = make_rng(seed, "sample", c);
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// The images selected by sample_indices_per_class, in input order.
inline Dataset sample_n_per_class(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  Dataset out{{}, ds.provenance + "[n=" + std::to_string(n) + "]"};
  for (auto i : sample_indices_per_class(ds, n, seed)) out.images.push_back(ds.images[i]);
  return out;
}

}  // namespace ssdr
