#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "emoser/gradcheck.hpp"
#include "emoser/layers.hpp"
#include "emoser/models.hpp"
#include "emoser/rng.hpp"

namespace emoser {

struct GradientCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;

  bool passed() const { return checked > 0 && max_rel_error < threshold; }
};

namespace suite_detail {

inline nn::BasicTensor<double> random_tensor(nn::Shape shape, SeededRng& rng, double scale = 1.0) {
  nn::BasicTensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline void randomize_parameters(nn::Layer<double>& layer, SeededRng& rng) {
  for (auto& p : layer.parameters()) {
    for (auto& v : p.value.values()) v = 0.5 * rng.normal();
  }
}

}  // namespace suite_detail

/// Central-difference checks (in double precision) of every layer and of the
/// full CNN on a 16x16 input, repeated over `seeds` seeds. Layer thresholds
/// are 1e-3; the composed stack uses 5e-3.
inline std::vector<GradientCheckResult> run_gradient_suite(std::size_t seeds = 100, std::uint64_t base_seed = 1,
                                                           double epsilon = 1e-3) {
  using namespace nn;
  std::vector<GradientCheckResult> results = {
      {"conv2d", 0, 1e-3}, {"relu", 0, 1e-3},    {"maxpool2d", 0, 1e-3},    {"dropout", 0, 1e-3},
      {"flatten", 0, 1e-3}, {"dense", 0, 1e-3},  {"softmax", 0, 1e-3},     {"softmax_xent", 0, 1e-3},
      {"cnn_fig1_16x16", 0, 5e-3}};
  auto record = [&](std::size_t i, const GradCheckReport& r) {
    results[i].max_rel_error = std::max(results[i].max_rel_error, r.max_rel_error);
    results[i].checked += r.checked;
    results[i].skipped_kinks += r.skipped_kinks;
  };

  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = SeededRng::derive(base_seed, s);
    SeededRng rng(seed);
    GradCheckOptions opts;
    opts.epsilon = epsilon;
    opts.seed = rng.next_u64();

    Conv2d<double> conv(2, 3, 3, 3);
    suite_detail::randomize_parameters(conv, rng);
    record(0, grad_check(conv, suite_detail::random_tensor({5, 5, 2}, rng), opts));

    Relu<double> relu;
    record(1, grad_check(relu, suite_detail::random_tensor({4, 4, 3}, rng), opts));

    MaxPool2d<double> pool;
    record(2, grad_check(pool, suite_detail::random_tensor({8, 8, 3}, rng), opts));

    Dropout<double> dropout(0.25);
    record(3, grad_check(dropout, suite_detail::random_tensor({6, 6, 2}, rng), opts));

    Flatten<double> flatten;
    record(4, grad_check(flatten, suite_detail::random_tensor({3, 4, 2}, rng), opts));

    Dense<double> dense(12, 7);
    suite_detail::randomize_parameters(dense, rng);
    record(5, grad_check(dense, suite_detail::random_tensor({12}, rng), opts));

    Softmax<double> softmax;
    record(6, grad_check(softmax, suite_detail::random_tensor({8}, rng), opts));

    record(7, grad_check_softmax_xent(suite_detail::random_tensor({8}, rng, 2.0), rng.below(8), opts));

    ModelSpec spec{ModelKind::CnnFig1, 16, 16, 8, {}};
    auto net = build_layers<double>(spec);
    init_params(net, rng);
    for (auto* p : net.parameters()) {
      for (auto& v : p->value.values()) v += 0.01 * rng.normal();  // non-zero biases
    }
    GradCheckOptions net_opts = opts;
    net_opts.max_coords = 24;
    record(8, grad_check_network(net, suite_detail::random_tensor({16, 16, 1}, rng), rng.below(8), net_opts));
  }
  return results;
}

}  // namespace emoser
