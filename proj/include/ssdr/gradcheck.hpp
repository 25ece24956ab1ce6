#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ssdr/init.hpp"
#include "ssdr/kernels/loss.hpp"
#include "ssdr/network.hpp"

namespace ssdr {

struct ParamCheck {
  std::string name;
  std::size_t sampled = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU or max-pool switch
  double max_rel_error = 0.0;
  double smallest_eps = 0.0;  // smallest step used by a sampled entry
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;

  /// Max error per layer (parameter name without its last component).
  std::vector<std::pair<std::string, double>> by_layer() const {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& p : params) {
      const auto layer = p.name.substr(0, p.name.rfind('.'));
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == layer; });
      if (it == out.end()) {
        out.emplace_back(layer, p.max_rel_error);
      } else {
        it->second = std::max(it->second, p.max_rel_error);
      }
    }
    return out;
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
}

namespace detail {

/// ReLU on/off pattern and max-pool selections of a train-mode pass.
template <class T>
std::vector<std::uint64_t> switch_pattern(std::span<const NetworkSpec* const> chain,
                                          std::span<const Tape<T>> tapes) {
  std::vector<std::uint64_t> sig;
  for (std::size_t s = 0; s < chain.size(); ++s) {
    for (std::size_t i = 0; i < chain[s]->layers.size(); ++i) {
      const auto kind = chain[s]->layers[i].kind;
      const auto& rec = tapes[s].records[i];
      if (kind == LayerKind::Relu) {
        for (T v : rec.input.data()) sig.push_back(v > T{0});
      } else if (kind == LayerKind::MaxPool) {
        sig.insert(sig.end(), rec.pool.argmax.begin(), rec.pool.argmax.end());
      }
    }
  }
  return sig;
}

template <class T>
struct ChainEval {
  double loss;
  BasicTensor<T> logits;
  std::vector<Tape<T>> tapes;
};

template <class T>
ChainEval<T> run_chain(std::span<const NetworkSpec* const> chain, BasicParamStore<T>& params,
                       const BasicTensor<T>& input, std::span<const int> labels, std::uint64_t dropout_seed) {
  Rng rng(dropout_seed);  // identical dropout masks on every evaluation
  ChainEval<T> r;
  BasicTensor<T> x = input;
  for (const auto* spec : chain) {
    auto f = forward(*spec, params, std::move(x), Mode::Train, rng);
    x = std::move(f.output);
    r.tapes.push_back(std::move(f.tape));
  }
  r.loss = softmax_cross_entropy(x, labels).loss;
  r.logits = std::move(x);
  return r;
}

}  // namespace detail

struct GradCheckOptions {
  double eps = 1e-3;
  std::size_t samples_per_param = 200;
  std::uint64_t seed = 0;
  std::size_t max_attempts_factor = 10;  // draws per parameter <= factor * samples
  bool skip_kinks = true;
  double min_eps = 0.0;  // if below eps, kinked draws retry with eps / 10 down to min_eps
};

/// Compares analytic gradients of the mean cross-entropy loss of a chain of
/// networks (e.g. extractor then classifier) against central differences.
/// Up to samples_per_param entries of every trainable parameter are checked.
/// With skip_kinks, entries whose perturbation flips a ReLU or max-pool
/// switch are skipped and replaced by another draw.
template <class T>
GradCheckReport gradient_check(std::span<const NetworkSpec* const> chain, BasicParamStore<T> params,
                               const BasicTensor<T>& input, std::span<const int> labels,
                               const GradCheckOptions& opt = {}) {
  const std::uint64_t dropout_seed = derive_seed(opt.seed, "gradcheck-dropout");
  params.zero_grad();
  auto base = detail::run_chain(chain, params, input, labels, dropout_seed);
  auto grad = softmax_cross_entropy(base.logits, labels).grad_logits;
  for (std::size_t s = chain.size(); s-- > 0;) {
    grad = backward(*chain[s], params, base.tapes[s], std::move(grad), s > 0);
  }
  const auto base_pattern = detail::switch_pattern<T>(chain, base.tapes);

  GradCheckReport report;
  Rng pick(derive_seed(opt.seed, "gradcheck-pick"));
  std::vector<std::string> names;
  for (const auto& [name, p] : params) {
    if (p.trainable && !p.buffer) names.push_back(name);
  }
  for (const auto& name : names) {
    ParamCheck pc{name};
    auto& p = params.at(name);
    std::vector<std::size_t> order(p.value.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), pick);
    const std::size_t attempts = std::min(order.size(), opt.max_attempts_factor * opt.samples_per_param);
    for (std::size_t k = 0; k < attempts && pc.sampled < opt.samples_per_param; ++k) {
      const std::size_t i = order[k];
      const T saved = p.value[i];
      for (double eps = opt.eps;; eps /= 10.0) {
        p.value[i] = static_cast<T>(saved + eps);
        auto plus = detail::run_chain(chain, params, input, labels, dropout_seed);
        p.value[i] = static_cast<T>(saved - eps);
        auto minus = detail::run_chain(chain, params, input, labels, dropout_seed);
        p.value[i] = saved;
        const bool kinked = opt.skip_kinks && (detail::switch_pattern<T>(chain, plus.tapes) != base_pattern ||
                                               detail::switch_pattern<T>(chain, minus.tapes) != base_pattern);
        if (kinked && eps / 10.0 >= opt.min_eps && opt.min_eps > 0.0) continue;
        if (kinked) {
          ++pc.skipped;
          break;
        }
        const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
        pc.max_rel_error = std::max(pc.max_rel_error, relative_error(p.grad[i], numeric));
        pc.smallest_eps = pc.sampled ? std::min(pc.smallest_eps, eps) : eps;
        ++pc.sampled;
        break;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  return report;
}

inline constexpr double kGradCheckTolerance = 1e-2;

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

/// Double-precision checks of the classifier head on [2, 256, 4, 4] inputs
/// and of the full scratch chain on [2, 3, 32, 32] images. The scratch check
/// retries kinked steps with smaller eps.
inline std::vector<NamedGradCheck> standard_gradient_checks(std::uint64_t seed = 1, std::size_t head_samples = 50,
                                                            std::size_t scratch_samples = 6) {
  std::vector<NamedGradCheck> out;
  auto random_input = [&](Shape s, std::string_view purpose) {
    Rng rng = make_rng(seed, purpose);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BasicTensor<double> t(s);
    for (auto& v : t.data()) v = u(rng);
    return t;
  };
  {
    const auto cls = build_classifier(4);
    Rng rng = make_rng(seed, "init");
    auto params = init_params<double>(cls, InitMethod::xavier(), rng);
    const std::vector<int> labels{1, 4};
    const NetworkSpec* chain[] = {&cls};
    GradCheckOptions opt;
    opt.samples_per_param = head_samples;
    opt.seed = seed;
    out.push_back({"classifier", gradient_check<double>(chain, params, random_input(Shape{2, 256, 4, 4}, "gradcheck-head"),
                                                        labels, opt)});
  }
  {
    const auto ext = build_feature_extractor(32);
    const auto cls = build_classifier(4);
    Rng rng = make_rng(seed, "init-extractor");
    auto params = init_params<double>(ext, InitMethod::msra(), rng);
    Rng rng2 = make_rng(seed, "init");
    params.merge(init_params<double>(cls, InitMethod::xavier(), rng2));
    const std::vector<int> labels{0, 3};
    const NetworkSpec* chain[] = {&ext, &cls};
    GradCheckOptions opt;
    opt.samples_per_param = scratch_samples;
    opt.seed = seed;
    opt.min_eps = 1e-8;
    out.push_back({"scratch", gradient_check<double>(chain, params, random_input(Shape{2, 3, 32, 32}, "gradcheck-scratch"),
                                                     labels, opt)});
  }
  return out;
}

}  // namespace ssdr
