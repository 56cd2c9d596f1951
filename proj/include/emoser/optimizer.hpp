#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "emoser/json_util.hpp"
#include "emoser/tensor.hpp"

namespace emoser::nn {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"kind", c.kind == OptimizerKind::Adam ? "adam" : "sgd"}, {"lr", c.lr}};
  if (c.kind == OptimizerKind::Adam) {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
  }
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  emoser::detail::require_known_keys(j, {"kind", "lr", "beta1", "beta2", "epsilon"}, "train.optimizer");
  std::string kind = c.kind == OptimizerKind::Adam ? "adam" : "sgd";
  emoser::detail::read_optional(j, "kind", kind, "train.optimizer");
  if (kind == "adam") {
    c.kind = OptimizerKind::Adam;
  } else if (kind == "sgd") {
    c.kind = OptimizerKind::Sgd;
  } else {
    fail(Errc::ConfigParseError, "train.optimizer.kind must be \"adam\" or \"sgd\"");
  }
  emoser::detail::read_optional(j, "lr", c.lr, "train.optimizer");
  emoser::detail::read_optional(j, "beta1", c.beta1, "train.optimizer");
  emoser::detail::read_optional(j, "beta2", c.beta2, "train.optimizer");
  emoser::detail::read_optional(j, "epsilon", c.epsilon, "train.optimizer");
  if (!(c.lr > 0.0)) fail(Errc::ConfigParseError, "train.optimizer.lr must be positive");
}

/// SGD: w -= lr g. Adam: bias-corrected first/second moment update.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }

  template <typename T>
  void step(std::span<Parameter<T>* const> params) {
    ++t_;
    if (cfg_.kind == OptimizerKind::Sgd) {
      const T lr = static_cast<T>(cfg_.lr);
      for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
      }
      return;
    }
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.epsilon);
    for (auto* p : params) {
      if (p->first_moment.size() != p->value.size()) {
        p->first_moment = BasicTensor<T>(p->value.shape());
        p->second_moment = BasicTensor<T>(p->value.shape());
      }
      T* w = p->value.data();
      const T* g = p->grad.data();
      T* m = p->first_moment.data();
      T* v = p->second_moment.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        const T mhat = m[i] / c1;
        const T vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace emoser::nn
