#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ssdr/init.hpp"
#include "ssdr/kernels/loss.hpp"
#include "ssdr/model.hpp"
#include "ssdr/optim.hpp"

namespace ssdr {

struct TrainConfig {
  std::size_t batch_size = 3;
  std::size_t max_updates = 6000;
  std::uint64_t seed = 0;
  bool transfer = true;
  InitMethod init;
  LrSchedule schedule;
  AdamConfig adam;
  bool record_grad_hist = false;
  std::size_t hist_interval = 50;
  std::size_t hist_bins = 50;
};

struct HistoryRow {
  std::size_t update;  // 1-based
  double loss;
  double lr;
};

/// |gradient| histogram of one layer (weights and bias) at one update.
struct GradHistogram {
  std::size_t update = 0;
  std::string layer;
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::uint64_t> counts;
  double median_abs = 0.0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::vector<GradHistogram> histograms;

  /// Mean loss over updates [first, last] (1-based, inclusive).
  double mean_loss(std::size_t first, std::size_t last) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.update >= first && r.update <= last) s += r.loss, ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// Uniform bins over [0, 99.5th percentile of |g|]; larger values fall in the
/// last bin.
inline GradHistogram gradient_histogram(std::string layer, std::size_t update, std::vector<double> abs_grads,
                                        std::size_t bins) {
  GradHistogram h;
  h.layer = std::move(layer);
  h.update = update;
  std::sort(abs_grads.begin(), abs_grads.end());
  const std::size_t n = abs_grads.size();
  if (n == 0 || bins == 0) return h;
  const auto rank = static_cast<std::size_t>(std::ceil(0.995 * static_cast<double>(n)));
  double hi = abs_grads[std::max<std::size_t>(rank, 1) - 1];
  if (!(hi > 0.0)) hi = 1e-30;
  h.median_abs = n % 2 ? abs_grads[n / 2] : 0.5 * (abs_grads[n / 2 - 1] + abs_grads[n / 2]);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double g : abs_grads) {
    const auto b = static_cast<std::size_t>(g / hi * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

/// Layers whose gradients are captured: first/last conv of each trainable network.
inline std::vector<std::string> histogram_layers(const Model& m) {
  std::vector<std::string> out;
  if (!m.transfer) out = {"conv1_1", "conv3_3"};
  out.push_back("cls.conv1");
  out.push_back("cls.conv3");
  return out;
}

/// Mini-batch training: every epoch reshuffles the sample order with rng and
/// drops the trailing partial batch; each update runs train-mode forward,
/// mean cross-entropy, backward and one Adam step at lr_at(update - 1).
inline TrainHistory train(Model& model, const SampleSource& data, const TrainConfig& cfg, Rng& rng) {
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (cfg.batch_size == 0 || data.size() < cfg.batch_size) {
    throw ConfigError("training set of " + std::to_string(data.size()) + " samples is smaller than one batch");
  }
  TrainHistory hist;
  AdamState adam{cfg.adam, 0, {}};
  model.params.zero_grad();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto hist_layers = histogram_layers(model);
  std::size_t update = 0;
  while (update < cfg.max_updates) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b + cfg.batch_size <= order.size() && update < cfg.max_updates; b += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b, cfg.batch_size);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(data.label(i));
      ModelTapes tapes;
      auto logits = model_forward(model, gather(data, idx), Mode::Train, rng, &tapes);
      auto ce = softmax_cross_entropy(logits, std::span<const int>(labels));
      ++update;
      if (!std::isfinite(ce.loss)) {
        throw NumericError("non-finite training loss at update " + std::to_string(update));
      }
      model_backward(model, tapes, std::move(ce.grad_logits));
      const double lr = lr_at(cfg.schedule, update - 1);
      if (cfg.record_grad_hist && (update == 1 || update % cfg.hist_interval == 0)) {
        for (const auto& layer : hist_layers) {
          std::vector<double> g;
          for (const char* suffix : {".weight", ".bias"}) {
            for (float v : model.params.at(layer + suffix).grad.data()) g.push_back(std::fabs(v));
          }
          hist.histograms.push_back(gradient_histogram(layer, update, std::move(g), cfg.hist_bins));
        }
      }
      adam_step(model.params, adam, lr);
      hist.rows.push_back({update, static_cast<double>(ce.loss), lr});
    }
  }
  return hist;
}

struct EvalResult {
  double accuracy = 0.0;
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};  // [true][predicted]
  std::vector<int> predictions;
};

/// Lowest class id wins ties.
inline int argmax_class(std::span<const float> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

inline EvalResult evaluate(Model& model, const SampleSource& data, std::size_t batch = 16) {
  EvalResult r;
  r.predictions.resize(data.size());
  Rng unused(0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.resize(std::min(batch, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto logits = model_forward(model, gather(data, idx), Mode::Eval, unused);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      r.predictions[start + k] = argmax_class(logits.data().subspan(k * logits.dim(1), logits.dim(1)));
    }
  }
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int truth = data.label(i), pred = r.predictions[i];
    ++r.confusion.at(static_cast<std::size_t>(truth)).at(static_cast<std::size_t>(pred));
    correct += truth == pred;
  }
  r.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
  return r;
}

}  // namespace ssdr
