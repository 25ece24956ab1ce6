#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "ssdr/tensor.hpp"

namespace ssdr {

template <class T>
struct SoftmaxCrossEntropy {
  T loss;
  BasicTensor<T> probs;
  BasicTensor<T> grad_logits;
};

/// Mean-over-batch cross entropy of max-shifted softmax probabilities.
template <class T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  SoftmaxCrossEntropy<T> r{T{0}, BasicTensor<T>(logits.shape()), BasicTensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t row = 0; row < n; ++row) {
    const int label = labels[row];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    const T* z = logits.ptr() + row * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) {
      const double pr = std::exp(z[j] - zmax - log_denom);
      r.probs.at(row, j) = static_cast<T>(pr);
      r.grad_logits.at(row, j) =
          static_cast<T>((pr - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) / static_cast<double>(n));
    }
    total += -(z[label] - zmax - log_denom);
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

}  // namespace ssdr
