#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"
#include "emoser/json_util.hpp"
#include "emoser/metrics.hpp"
#include "emoser/models.hpp"
#include "emoser/optimizer.hpp"
#include "emoser/parallel.hpp"
#include "emoser/ravdess.hpp"
#include "emoser/rng.hpp"

namespace emoser {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  nn::OptimizerConfig optimizer;
  std::uint64_t seed = 42;
  bool shuffle = true;

  void validate() const {
    if (epochs < 1) fail(Errc::ConfigParseError, "train.epochs must be at least 1");
    if (batch_size < 1) fail(Errc::ConfigParseError, "train.batch_size must be at least 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"optimizer", c.optimizer}, {"seed", c.seed},
       {"shuffle", c.shuffle}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::require_known_keys(j, {"epochs", "batch_size", "optimizer", "seed", "shuffle"}, "train");
  detail::read_optional(j, "epochs", c.epochs, "train");
  detail::read_optional(j, "batch_size", c.batch_size, "train");
  detail::read_optional(j, "seed", c.seed, "train");
  detail::read_optional(j, "shuffle", c.shuffle, "train");
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<nn::OptimizerConfig>();
  c.validate();
}

struct Sample {
  nn::Tensor input;  // H x W x 1
  std::size_t label = 0;
};

inline std::vector<Sample> make_samples(std::span<const ravdess::LabeledExample> examples,
                                        std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (const auto i : indices) {
    if (i >= examples.size()) fail(Errc::InvalidArgument, "split index " + std::to_string(i) + " out of range");
    out.push_back({to_tensor(examples[i].features), examples[i].label});
  }
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using History = std::vector<EpochRecord>;

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

namespace detail {

inline void check_samples(const Model& model, std::span<const Sample> set, const char* what) {
  if (set.empty()) fail(Errc::EmptySet, std::string(what) + " set is empty");
  const nn::Shape expected{model.spec().height, model.spec().width, 1};
  for (const auto& s : set) {
    if (s.input.shape() != expected) {
      fail(Errc::ShapeMismatch, std::string(what) + " sample shape " + nn::shape_string(s.input.shape()) +
                                    " != model input " + nn::shape_string(expected));
    }
    if (s.label >= model.spec().num_classes) fail(Errc::LabelOutOfRange, "sample label exceeds num_classes");
  }
}

inline std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

/// Eval-mode predictions (argmax, first index on ties) and per-example losses,
/// sharded across workers and merged in example order.
inline void eval_pass(const Model& model, std::span<const Sample> set, std::vector<std::size_t>& predictions,
                      std::vector<double>& losses) {
  predictions.assign(set.size(), 0);
  losses.assign(set.size(), 0.0);
  const std::size_t chunks = std::min(worker_count(), set.size());
  parallel_for(chunks, [&](std::size_t c) {
    auto ws = model.network().workspace(false);
    for (std::size_t i = c * set.size() / chunks; i < (c + 1) * set.size() / chunks; ++i) {
      losses[i] = model.network().forward_loss(set[i].input, set[i].label, ws, {nn::Mode::Eval, nullptr, false});
      predictions[i] = detail::argmax(ws.acts.back().values());
    }
  });
}

inline LossAccuracy loss_and_accuracy(const Model& model, std::span<const Sample> set) {
  detail::check_samples(model, set, "evaluation");
  std::vector<std::size_t> pred;
  std::vector<double> losses;
  eval_pass(model, set, pred, losses);
  LossAccuracy r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    r.loss += losses[i];
    correct += pred[i] == set[i].label;
  }
  r.loss /= static_cast<double>(set.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  if (!std::isfinite(r.loss)) fail(Errc::NonFinite, "evaluation loss is not finite");
  return r;
}

/// Eval-mode argmax predictions, confusion matrix, and all derived metrics.
inline MetricsReport evaluate(const Model& model, std::span<const Sample> set) {
  detail::check_samples(model, set, "evaluation");
  std::vector<std::size_t> pred;
  std::vector<double> losses;
  eval_pass(model, set, pred, losses);
  std::vector<std::size_t> truth;
  truth.reserve(set.size());
  for (const auto& s : set) truth.push_back(s.label);
  return metrics_report(confusion_matrix(truth, pred, model.spec().num_classes));
}

/// Examples of one mini-batch are split into this many contiguous groups;
/// each group accumulates gradients in example order and the groups are summed
/// in group order, so results do not depend on the worker count.
inline constexpr std::size_t kGradientGroups = 4;

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with a seeded shuffle per epoch, followed by Eval-mode
/// passes over the train and validation sets. Dropout masks are derived from
/// (seed, epoch, example index), so a run is bitwise reproducible.
inline History train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                     const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  detail::check_samples(model, train_set, "training");
  detail::check_samples(model, val_set, "validation");

  auto& net = model.network();
  auto params = net.parameters();
  nn::Optimizer optimizer(cfg.optimizer);
  std::vector<nn::Network<float>::Workspace> groups;
  for (std::size_t g = 0; g < kGradientGroups; ++g) groups.push_back(net.workspace());
  std::vector<double> group_loss(kGradientGroups);

  std::vector<std::size_t> order(train_set.size());
  History history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::uint64_t epoch_seed = SeededRng::derive(cfg.seed, epoch);
    if (cfg.shuffle) SeededRng(SeededRng::derive(epoch_seed, 0)).shuffle(std::span(order));
    const std::uint64_t mask_seed = SeededRng::derive(epoch_seed, 1);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::size_t n_groups = std::min(kGradientGroups, len);
      parallel_for(n_groups, [&](std::size_t g) {
        auto& ws = groups[g];
        nn::Network<float>::zero_grads(ws);
        group_loss[g] = 0.0;
        for (std::size_t pos = start + g * len / n_groups; pos < start + (g + 1) * len / n_groups; ++pos) {
          const std::size_t idx = order[pos];
          SeededRng mask_rng(SeededRng::derive(mask_seed, idx));
          group_loss[g] += net.loss_and_backward(train_set[idx].input, train_set[idx].label, ws,
                                                 {nn::Mode::Train, &mask_rng, false});
        }
      });
      double batch_loss = 0.0;
      for (std::size_t g = 0; g < n_groups; ++g) batch_loss += group_loss[g];
      if (!std::isfinite(batch_loss)) fail(Errc::NonFinite, "training loss became non-finite");

      const float scale = 1.0f / static_cast<float>(len);
      std::size_t pi = 0;
      for (std::size_t l = 0; l < net.size(); ++l) {
        for (std::size_t i = 0; i < groups[0].param_grads[l].size(); ++i, ++pi) {
          auto& grad = params[pi]->grad;
          std::copy(groups[0].param_grads[l][i].values().begin(), groups[0].param_grads[l][i].values().end(),
                    grad.data());
          for (std::size_t g = 1; g < n_groups; ++g) {
            const auto& src = groups[g].param_grads[l][i];
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += src[k];
          }
          for (auto& v : grad.values()) v *= scale;
        }
      }
      optimizer.step<float>(params);
    }

    const auto tr = loss_and_accuracy(model, train_set);
    const auto va = loss_and_accuracy(model, val_set);
    history.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

}  // namespace emoser
