#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emoser/error.hpp"
#include "emoser/layers.hpp"
#include "emoser/rng.hpp"
#include "emoser/tensor.hpp"

namespace emoser::nn {

/// A fixed sequence of layers with shape checking at construction time.
template <typename T>
class Network {
 public:
  /// Activations, gradients and layer caches for one worker. Parameter
  /// gradients accumulate here until the caller reduces them.
  struct Workspace {
    std::vector<BasicTensor<T>> acts;
    std::vector<BasicTensor<T>> grads;
    std::vector<LayerCache<T>> caches;
    std::vector<std::vector<BasicTensor<T>>> param_grads;
  };

  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer) {
    shapes_.push_back(layer->output_shape(output_shape()));
    layers_.push_back(std::move(layer));
  }

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }
  const Shape& layer_output_shape(std::size_t i) const { return shapes_.at(i); }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_)
      for (auto& p : l->parameters()) out.push_back(&p);
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& l : layers_)
      for (const auto& p : std::as_const(*l).parameters()) out.push_back(&p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  std::vector<std::string> describe() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) out.push_back(l->describe());
    return out;
  }

  /// Inference-only workspaces skip the parameter-gradient buffers.
  Workspace workspace(bool with_param_grads = true) const {
    Workspace ws;
    ws.acts.resize(layers_.size());
    ws.grads.resize(layers_.size());
    ws.caches.resize(layers_.size());
    ws.param_grads.resize(layers_.size());
    if (!with_param_grads) return ws;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (const auto& p : std::as_const(*layers_[l]).parameters()) ws.param_grads[l].emplace_back(p.value.shape());
    }
    return ws;
  }

  static void zero_grads(Workspace& ws) {
    for (auto& layer_grads : ws.param_grads)
      for (auto& g : layer_grads) g.fill(T{0});
  }

  const BasicTensor<T>& forward(const BasicTensor<T>& x, Workspace& ws, const ForwardContext& ctx) const {
    if (x.shape() != input_shape_) {
      fail(Errc::ShapeMismatch, "network input " + shape_string(x.shape()) + " != " + shape_string(input_shape_));
    }
    const BasicTensor<T>* cur = &x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l]->forward(*cur, ws.acts[l], ws.caches[l], ctx);
      cur = &ws.acts[l];
    }
    return *cur;
  }

  /// Backpropagates `dout`, the gradient with respect to the output of layer
  /// end-1, through layers [0, end). The input gradient is written only when
  /// `dinput` is non-null.
  void backward(const BasicTensor<T>& x, Workspace& ws, std::size_t end, const BasicTensor<T>& dout,
                BasicTensor<T>* dinput) const {
    const BasicTensor<T>* cur = &dout;
    for (std::size_t l = end; l-- > 0;) {
      BasicTensor<T>* target = l > 0 ? &ws.grads[l - 1] : dinput;
      const BasicTensor<T>& in = l > 0 ? ws.acts[l - 1] : x;
      layers_[l]->backward(in, ws.acts[l], *cur, target, ws.caches[l], ws.param_grads[l]);
      cur = target;
    }
  }

  /// Cross-entropy of the final softmax against `label`, followed by the fused
  /// softmax/cross-entropy backward pass (gradient probs - onehot).
  T loss_and_backward(const BasicTensor<T>& x, std::size_t label, Workspace& ws, const ForwardContext& ctx,
                      BasicTensor<T>* dinput = nullptr) const {
    if (layers_.size() < 2 || layers_.back()->kind() != LayerKind::Softmax) {
      fail(Errc::InvalidArgument, "loss_and_backward needs a network ending in softmax");
    }
    const T loss = forward_loss(x, label, ws, ctx);
    const auto dlogits = softmax_xent_grad(ws.acts.back(), label);
    backward(x, ws, layers_.size() - 1, dlogits, dinput);
    return loss;
  }

  /// Forward pass returning the cross-entropy loss (computed from the logits).
  T forward_loss(const BasicTensor<T>& x, std::size_t label, Workspace& ws, const ForwardContext& ctx) const {
    forward(x, ws, ctx);
    return softmax_xent(ws.acts[layers_.size() - 2], label).loss;
  }

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape> shapes_;
};

// ---------------------------------------------------------------------------
// Initialization

template <typename T>
void init_he_normal(BasicTensor<T>& w, std::size_t fan_in, SeededRng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(stddev * rng.normal());
}

template <typename T>
void init_glorot_uniform(BasicTensor<T>& w, std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

/// He-normal weights for layers whose output feeds a ReLU, Glorot-uniform
/// otherwise (the classifier head); all biases zero.
template <typename T>
void init_params(Network<T>& net, SeededRng& rng) {
  for (std::size_t l = 0; l < net.size(); ++l) {
    auto params = net.layer(l).parameters();
    if (params.empty()) continue;
    auto& w = params[0].value;
    std::size_t fan_in = 0, fan_out = 0;
    if (net.layer(l).kind() == LayerKind::Conv2d) {
      fan_in = w.dim(0) * w.dim(1) * w.dim(2);
      fan_out = w.dim(0) * w.dim(1) * w.dim(3);
    } else {
      fan_in = w.dim(0);
      fan_out = w.dim(1);
    }
    const bool feeds_relu = l + 1 < net.size() && net.layer(l + 1).kind() == LayerKind::Relu;
    if (feeds_relu) {
      init_he_normal(w, fan_in, rng);
    } else {
      init_glorot_uniform(w, fan_in, fan_out, rng);
    }
    params[1].value.fill(T{0});
  }
}

}  // namespace emoser::nn
