#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "emoser/layers.hpp"
#include "emoser/network.hpp"
#include "emoser/rng.hpp"

namespace emoser::nn {

struct GradCheckOptions {
  double epsilon = 1e-3;
  /// Coordinates sampled per tensor (input and each parameter); 0 checks all.
  std::size_t max_coords = 0;
  std::uint64_t seed = 1;
  Mode mode = Mode::Train;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;

  void merge(const GradCheckReport& o) {
    max_rel_error = std::max(max_rel_error, o.max_rel_error);
    checked += o.checked;
    skipped_kinks += o.skipped_kinks;
  }
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace detail {

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords, SeededRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= n) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(max_coords);
  return idx;
}

struct Probe {
  double value;
  std::uint64_t signature;
};

/// Central differences on every sampled coordinate of every target tensor.
/// A coordinate whose +/- epsilon probe changes any ReLU or max-pool decision
/// sits on a kink and is skipped.
template <typename T>
GradCheckReport central_differences(const std::function<Probe()>& eval, std::vector<BasicTensor<T>*> targets,
                                    const std::vector<const BasicTensor<T>*>& analytic,
                                    const GradCheckOptions& opts, SeededRng& rng) {
  GradCheckReport report;
  const std::uint64_t base_sig = eval().signature;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& x = *targets[t];
    for (const std::size_t c : sample_coords(x.size(), opts.max_coords, rng)) {
      const T saved = x[c];
      x[c] = static_cast<T>(saved + opts.epsilon);
      const Probe plus = eval();
      x[c] = static_cast<T>(saved - opts.epsilon);
      const Probe minus = eval();
      x[c] = saved;
      if (plus.signature != base_sig || minus.signature != base_sig) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * opts.epsilon);
      report.max_rel_error =
          std::max(report.max_rel_error, relative_error(static_cast<double>((*analytic[t])[c]), numeric));
      ++report.checked;
    }
  }
  return report;
}

}  // namespace detail

/// Checks one layer against the scalar objective f = sum(r * layer(x)) with a
/// fixed random r; covers the input gradient and every parameter gradient.
/// Train-mode dropout reuses one mask for all probes.
template <typename T>
GradCheckReport grad_check(Layer<T>& layer, BasicTensor<T> input, const GradCheckOptions& opts = {}) {
  SeededRng rng(opts.seed);
  const std::uint64_t mask_seed = rng.next_u64();
  BasicTensor<T> weights(layer.output_shape(input.shape()));
  for (auto& v : weights.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));

  LayerCache<T> cache;
  BasicTensor<T> out;
  auto eval = [&]() -> detail::Probe {
    SeededRng mask_rng(mask_seed);
    layer.forward(input, out, cache, {opts.mode, &mask_rng, true});
    double f = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) f += static_cast<double>(weights[i]) * out[i];
    return {f, cache.signature};
  };

  eval();
  BasicTensor<T> din;
  std::vector<BasicTensor<T>> pgrads;
  for (const auto& p : std::as_const(layer).parameters()) pgrads.emplace_back(p.value.shape());
  layer.backward(input, out, weights, &din, cache, pgrads);

  std::vector<BasicTensor<T>*> targets{&input};
  std::vector<const BasicTensor<T>*> analytic{&din};
  auto params = layer.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    targets.push_back(&params[i].value);
    analytic.push_back(&pgrads[i]);
  }
  return detail::central_differences<T>(eval, targets, analytic, opts, rng);
}

/// Checks a whole network under the cross-entropy loss of its softmax output.
template <typename T>
GradCheckReport grad_check_network(Network<T>& net, BasicTensor<T> input, std::size_t label,
                                   const GradCheckOptions& opts = {}) {
  SeededRng rng(opts.seed);
  const std::uint64_t mask_seed = rng.next_u64();
  auto ws = net.workspace();

  auto eval = [&]() -> detail::Probe {
    SeededRng mask_rng(mask_seed);
    const double loss = net.forward_loss(input, label, ws, {opts.mode, &mask_rng, true});
    std::uint64_t sig = emoser::nn::detail::kFnvBasis;
    for (const auto& c : ws.caches) sig = emoser::nn::detail::fnv_step(sig, c.signature);
    return {loss, sig};
  };

  Network<T>::zero_grads(ws);
  BasicTensor<T> din;
  {
    SeededRng mask_rng(mask_seed);
    net.loss_and_backward(input, label, ws, {opts.mode, &mask_rng, true}, &din);
  }
  auto analytic_grads = ws.param_grads;

  std::vector<BasicTensor<T>*> targets{&input};
  std::vector<const BasicTensor<T>*> analytic{&din};
  for (std::size_t l = 0; l < net.size(); ++l) {
    auto params = net.layer(l).parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      targets.push_back(&params[i].value);
      analytic.push_back(&analytic_grads[l][i]);
    }
  }
  return detail::central_differences<T>(eval, targets, analytic, opts, rng);
}

}  // namespace emoser::nn

namespace emoser::nn {

/// Checks d loss / d logits = probs - onehot for the fused softmax + cross-entropy.
template <typename T>
GradCheckReport grad_check_softmax_xent(BasicTensor<T> logits, std::size_t label, const GradCheckOptions& opts = {}) {
  SeededRng rng(opts.seed);
  const auto analytic = softmax_xent_grad(softmax_xent(logits, label).probs, label);
  auto eval = [&]() -> detail::Probe { return {static_cast<double>(softmax_xent(logits, label).loss), 0}; };
  return detail::central_differences<T>(eval, {&logits}, {&analytic}, opts, rng);
}

}  // namespace emoser::nn
