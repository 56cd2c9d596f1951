#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"
#include "emoser/rng.hpp"
#include "emoser/tensor.hpp"

namespace emoser::nn {

enum class Mode { Train, Eval };

struct ForwardContext {
  Mode mode = Mode::Eval;
  SeededRng* rng = nullptr;   // required for Train-mode dropout
  bool track_kinks = false;   // fill LayerCache::signature (gradient checking)
};

/// Per-layer, per-worker state produced by forward and consumed by backward.
template <typename T>
struct LayerCache {
  std::vector<std::uint32_t> index;
  std::vector<T> mask;
  std::vector<T> scratch;
  std::uint64_t signature = 0;
};

namespace detail {

inline std::uint64_t fnv_step(std::uint64_t h, std::uint64_t v) { return (h ^ v) * 0x100000001b3ULL; }
inline constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(Errc::ShapeMismatch, what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: valid padding, stride 1. Input H x W x C, weights Kh x Kw x C x F.

template <typename T>
void conv2d_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b, BasicTensor<T>& out) {
  detail::require(in.rank() == 3 && w.rank() == 4, "conv2d expects an HxWxC input and KhxKwxCxF weights");
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const std::size_t Kh = w.dim(0), Kw = w.dim(1), F = w.dim(3);
  detail::require(w.dim(2) == C, "conv2d weight channels " + std::to_string(w.dim(2)) + " != input channels " +
                                     std::to_string(C));
  detail::require(b.size() == F, "conv2d bias length must equal the filter count");
  detail::require(H >= Kh && W >= Kw, "conv2d input " + shape_string(in.shape()) + " smaller than kernel");
  const std::size_t Ho = H - Kh + 1, Wo = W - Kw + 1, row = Kw * C;
  out.reset({Ho, Wo, F});

  const T* src_base = in.data();
  const T* wdat = w.data();
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      T* o = out.data() + (i * Wo + j) * F;
      for (std::size_t f = 0; f < F; ++f) o[f] = b[f];
      for (std::size_t a = 0; a < Kh; ++a) {
        const T* src = src_base + ((i + a) * W + j) * C;
        const T* wa = wdat + a * row * F;
        for (std::size_t k = 0; k < row; ++k) {
          const T x = src[k];
          if (x == T{0}) continue;
          const T* wk = wa + k * F;
          for (std::size_t f = 0; f < F; ++f) o[f] += x * wk[f];
        }
      }
    }
  }
}

/// Accumulates weight and bias gradients; writes the input gradient when
/// `din` is non-null.
template <typename T>
void conv2d_backward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& dout,
                     BasicTensor<T>* din, BasicTensor<T>& dw, BasicTensor<T>& db, std::vector<T>& scratch) {
  const std::size_t W = in.dim(1), C = in.dim(2);
  const std::size_t Kh = w.dim(0), Kw = w.dim(1), F = w.dim(3);
  const std::size_t Ho = dout.dim(0), Wo = dout.dim(1), row = Kw * C, K = Kh * row;
  detail::require(dout.dim(2) == F, "conv2d output gradient has the wrong filter count");

  const T* src_base = in.data();
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      const T* g = dout.data() + (i * Wo + j) * F;
      for (std::size_t f = 0; f < F; ++f) db[f] += g[f];
      for (std::size_t a = 0; a < Kh; ++a) {
        const T* src = src_base + ((i + a) * W + j) * C;
        T* dwa = dw.data() + a * row * F;
        for (std::size_t k = 0; k < row; ++k) {
          const T x = src[k];
          if (x == T{0}) continue;
          T* dwk = dwa + k * F;
          for (std::size_t f = 0; f < F; ++f) dwk[f] += x * g[f];
        }
      }
    }
  }

  if (din == nullptr) return;
  din->reset(in.shape(), true);
  scratch.resize(K * F);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t f = 0; f < F; ++f) scratch[f * K + k] = w[k * F + f];
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      const T* g = dout.data() + (i * Wo + j) * F;
      for (std::size_t f = 0; f < F; ++f) {
        const T gf = g[f];
        if (gf == T{0}) continue;
        const T* wf = scratch.data() + f * K;
        for (std::size_t a = 0; a < Kh; ++a) {
          T* d = din->data() + ((i + a) * W + j) * C;
          const T* wfa = wf + a * row;
          for (std::size_t k = 0; k < row; ++k) d[k] += gf * wfa[k];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
void relu_forward(const BasicTensor<T>& in, BasicTensor<T>& out) {
  out.reset(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
}

/// Subgradient 0 at exactly 0.
template <typename T>
void relu_backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) {
  din.reset(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > T{0} ? dout[i] : T{0};
}

// ---------------------------------------------------------------------------
// maxpool2d: 2x2 window, stride 2, trailing odd row/column dropped. Ties go
// to the first element in row-major window order.

template <typename T>
void maxpool2d_forward(const BasicTensor<T>& in, BasicTensor<T>& out, std::vector<std::uint32_t>& argmax) {
  detail::require(in.rank() == 3, "maxpool2d expects an HxWxC input");
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  detail::require(H >= 2 && W >= 2, "maxpool2d input " + shape_string(in.shape()) + " is smaller than 2x2");
  const std::size_t Ho = H / 2, Wo = W / 2;
  out.reset({Ho, Wo, C});
  argmax.resize(out.size());
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((2 * i) * W + 2 * j) * C + c;
        const std::size_t candidates[3] = {best + C, best + W * C, best + W * C + C};
        for (const std::size_t idx : candidates) {
          if (in[idx] > in[best]) best = idx;
        }
        const std::size_t o = (i * Wo + j) * C + c;
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool2d_backward(const Shape& in_shape, const BasicTensor<T>& dout, std::span<const std::uint32_t> argmax,
                        BasicTensor<T>& din) {
  din.reset(in_shape, true);
  for (std::size_t o = 0; o < dout.size(); ++o) din[argmax[o]] += dout[o];
}

// ---------------------------------------------------------------------------
// dropout (inverted): survivors scaled by 1/(1-rate) at train time.

inline void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(Errc::InvalidRate, "dropout rate must lie in [0, 1)");
}

template <typename T>
void dropout_forward(const BasicTensor<T>& in, BasicTensor<T>& out, std::vector<T>& mask, double rate, Mode mode,
                     SeededRng* rng) {
  validate_dropout_rate(rate);
  out.reset(in.shape());
  if (mode == Mode::Eval || rate == 0.0) {
    mask.clear();
    std::copy(in.values().begin(), in.values().end(), out.data());
    return;
  }
  if (rng == nullptr) fail(Errc::InvalidArgument, "train-mode dropout needs a random stream");
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  mask.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = rng->uniform() < rate ? T{0} : scale;
    out[i] = in[i] * mask[i];
  }
}

template <typename T>
void dropout_backward(const BasicTensor<T>& dout, std::span<const T> mask, BasicTensor<T>& din) {
  din.reset(dout.shape());
  if (mask.empty()) {
    std::copy(dout.values().begin(), dout.values().end(), din.data());
    return;
  }
  for (std::size_t i = 0; i < dout.size(); ++i) din[i] = dout[i] * mask[i];
}

// ---------------------------------------------------------------------------
// dense: y = x W + b with W stored n x m.

template <typename T>
void dense_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b, BasicTensor<T>& out) {
  detail::require(w.rank() == 2, "dense weights must be n x m");
  const std::size_t n = w.dim(0), m = w.dim(1);
  detail::require(in.size() == n, "dense input length " + std::to_string(in.size()) + " != " + std::to_string(n));
  detail::require(b.size() == m, "dense bias length must equal the unit count");
  out.reset({m});
  T* y = out.data();
  for (std::size_t j = 0; j < m; ++j) y[j] = b[j];
  const T* wd = w.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = in[i];
    if (x == T{0}) continue;
    const T* wi = wd + i * m;
    for (std::size_t j = 0; j < m; ++j) y[j] += x * wi[j];
  }
}

template <typename T>
void dense_backward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& dout,
                    BasicTensor<T>* din, BasicTensor<T>& dw, BasicTensor<T>& db) {
  const std::size_t n = w.dim(0), m = w.dim(1);
  const T* g = dout.data();
  for (std::size_t j = 0; j < m; ++j) db[j] += g[j];
  for (std::size_t i = 0; i < n; ++i) {
    const T x = in[i];
    if (x == T{0}) continue;
    T* dwi = dw.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) dwi[j] += x * g[j];
  }
  if (din == nullptr) return;
  din->reset(in.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* wi = w.data() + i * m;
    T acc{0};
    for (std::size_t j = 0; j < m; ++j) acc += wi[j] * g[j];
    (*din)[i] = acc;
  }
}

// ---------------------------------------------------------------------------
// softmax and softmax + categorical cross-entropy

template <typename T>
void softmax_forward(const BasicTensor<T>& logits, BasicTensor<T>& probs) {
  probs.reset(logits.shape());
  T peak = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) peak = std::max(peak, logits[i]);
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (probs[i] = std::exp(logits[i] - peak));
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= sum;
}

template <typename T>
void softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& dout, BasicTensor<T>& din) {
  din.reset(probs.shape());
  T dot{0};
  for (std::size_t i = 0; i < probs.size(); ++i) dot += dout[i] * probs[i];
  for (std::size_t i = 0; i < probs.size(); ++i) din[i] = probs[i] * (dout[i] - dot);
}

template <typename T>
struct SoftmaxXent {
  BasicTensor<T> probs;
  T loss{};
};

/// probs = softmax(logits), loss = -log probs[label] evaluated through
/// log-sum-exp so saturated logits stay finite.
template <typename T>
SoftmaxXent<T> softmax_xent(const BasicTensor<T>& logits, std::size_t label) {
  if (logits.size() < 2) fail(Errc::ShapeMismatch, "softmax_xent needs at least two classes");
  if (label >= logits.size()) {
    fail(Errc::LabelOutOfRange, "label " + std::to_string(label) + " >= " + std::to_string(logits.size()));
  }
  SoftmaxXent<T> r;
  softmax_forward(logits, r.probs);
  T peak = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) peak = std::max(peak, logits[i]);
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - peak);
  r.loss = std::log(sum) - (logits[label] - peak);
  return r;
}

/// Gradient of the cross-entropy with respect to the logits: probs - onehot.
template <typename T>
BasicTensor<T> softmax_xent_grad(const BasicTensor<T>& probs, std::size_t label) {
  BasicTensor<T> g = probs;
  g[label] -= T{1};
  return g;
}

// ---------------------------------------------------------------------------
// Layer objects

enum class LayerKind { Conv2d, Relu, MaxPool2d, Dropout, Flatten, Dense, Softmax };

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  /// Short structural description, e.g. "conv 32@2x2" or "dropout 0.25".
  virtual std::string describe() const = 0;
  virtual nlohmann::json to_json() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual std::span<Parameter<T>> parameters() { return {}; }
  virtual std::span<const Parameter<T>> parameters() const { return {}; }

  virtual void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>& cache,
                       const ForwardContext& ctx) const = 0;

  /// Writes din when non-null and accumulates parameter gradients into
  /// `param_grads` (one tensor per parameter, same order as parameters()).
  virtual void backward(const BasicTensor<T>& in, const BasicTensor<T>& out, const BasicTensor<T>& dout,
                        BasicTensor<T>* din, LayerCache<T>& cache, std::span<BasicTensor<T>> param_grads) const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kh, std::size_t kw)
      : params_{Parameter<T>({kh, kw, in_channels, filters}), Parameter<T>({filters})} {}

  LayerKind kind() const override { return LayerKind::Conv2d; }
  std::size_t filters() const { return params_[1].value.size(); }
  std::size_t kernel_h() const { return params_[0].value.dim(0); }
  std::size_t kernel_w() const { return params_[0].value.dim(1); }
  std::size_t in_channels() const { return params_[0].value.dim(2); }

  std::string describe() const override {
    return "conv " + std::to_string(filters()) + "@" + std::to_string(kernel_h()) + "x" + std::to_string(kernel_w());
  }
  nlohmann::json to_json() const override {
    return {{"type", "conv2d"}, {"filters", filters()}, {"kernel", {kernel_h(), kernel_w()}},
            {"in_channels", in_channels()}};
  }
  Shape output_shape(const Shape& in) const override {
    detail::require(in.size() == 3 && in[0] >= kernel_h() && in[1] >= kernel_w() && in[2] == in_channels(),
                    "conv2d cannot take input " + shape_string(in));
    return {in[0] - kernel_h() + 1, in[1] - kernel_w() + 1, filters()};
  }

  std::span<Parameter<T>> parameters() override { return params_; }
  std::span<const Parameter<T>> parameters() const override { return params_; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>&, const ForwardContext&) const override {
    conv2d_forward(in, params_[0].value, params_[1].value, out);
  }
  void backward(const BasicTensor<T>& in, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>& cache, std::span<BasicTensor<T>> grads) const override {
    conv2d_backward(in, params_[0].value, dout, din, grads[0], grads[1], cache.scratch);
  }

 private:
  std::vector<Parameter<T>> params_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }
  std::string describe() const override { return "relu"; }
  nlohmann::json to_json() const override { return {{"type", "relu"}}; }
  Shape output_shape(const Shape& in) const override { return in; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>& cache,
               const ForwardContext& ctx) const override {
    relu_forward(in, out);
    if (ctx.track_kinks) {
      std::uint64_t h = detail::kFnvBasis;
      for (std::size_t i = 0; i < in.size(); ++i) h = detail::fnv_step(h, in[i] > T{0});
      cache.signature = h;
    }
  }
  void backward(const BasicTensor<T>& in, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>&, std::span<BasicTensor<T>>) const override {
    if (din) relu_backward(in, dout, *din);
  }
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::MaxPool2d; }
  std::string describe() const override { return "maxpool 2x2"; }
  nlohmann::json to_json() const override { return {{"type", "maxpool2d"}, {"pool", {2, 2}}}; }
  Shape output_shape(const Shape& in) const override {
    detail::require(in.size() == 3 && in[0] >= 2 && in[1] >= 2, "maxpool2d cannot take input " + shape_string(in));
    return {in[0] / 2, in[1] / 2, in[2]};
  }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>& cache,
               const ForwardContext& ctx) const override {
    maxpool2d_forward(in, out, cache.index);
    if (ctx.track_kinks) {
      std::uint64_t h = detail::kFnvBasis;
      for (const auto idx : cache.index) h = detail::fnv_step(h, idx);
      cache.signature = h;
    }
  }
  void backward(const BasicTensor<T>& in, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>& cache, std::span<BasicTensor<T>>) const override {
    if (din) maxpool2d_backward(in.shape(), dout, std::span<const std::uint32_t>(cache.index), *din);
  }
};

template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate) : rate_(rate) { validate_dropout_rate(rate); }

  double rate() const { return rate_; }
  LayerKind kind() const override { return LayerKind::Dropout; }
  std::string describe() const override {
    std::ostringstream os;
    os << "dropout " << rate_;
    return os.str();
  }
  nlohmann::json to_json() const override { return {{"type", "dropout"}, {"rate", rate_}}; }
  Shape output_shape(const Shape& in) const override { return in; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>& cache,
               const ForwardContext& ctx) const override {
    dropout_forward(in, out, cache.mask, rate_, ctx.mode, ctx.rng);
  }
  void backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>& cache, std::span<BasicTensor<T>>) const override {
    if (din) dropout_backward(dout, std::span<const T>(cache.mask), *din);
  }

 private:
  double rate_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::Flatten; }
  std::string describe() const override { return "flatten"; }
  nlohmann::json to_json() const override { return {{"type", "flatten"}}; }
  Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>&, const ForwardContext&) const override {
    out.reset({in.size()});
    std::copy(in.values().begin(), in.values().end(), out.data());
  }
  void backward(const BasicTensor<T>& in, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>&, std::span<BasicTensor<T>>) const override {
    if (!din) return;
    din->reset(in.shape());
    std::copy(dout.values().begin(), dout.values().end(), din->data());
  }
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t inputs, std::size_t units) : params_{Parameter<T>({inputs, units}), Parameter<T>({units})} {}

  std::size_t inputs() const { return params_[0].value.dim(0); }
  std::size_t units() const { return params_[0].value.dim(1); }
  LayerKind kind() const override { return LayerKind::Dense; }
  std::string describe() const override { return "dense " + std::to_string(units()); }
  nlohmann::json to_json() const override { return {{"type", "dense"}, {"inputs", inputs()}, {"units", units()}}; }
  Shape output_shape(const Shape& in) const override {
    detail::require(shape_size(in) == inputs(), "dense cannot take input " + shape_string(in));
    return {units()};
  }

  std::span<Parameter<T>> parameters() override { return params_; }
  std::span<const Parameter<T>> parameters() const override { return params_; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>&, const ForwardContext&) const override {
    dense_forward(in, params_[0].value, params_[1].value, out);
  }
  void backward(const BasicTensor<T>& in, const BasicTensor<T>&, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>&, std::span<BasicTensor<T>> grads) const override {
    dense_backward(in, params_[0].value, dout, din, grads[0], grads[1]);
  }

 private:
  std::vector<Parameter<T>> params_;
};

template <typename T>
class Softmax final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::Softmax; }
  std::string describe() const override { return "softmax"; }
  nlohmann::json to_json() const override { return {{"type", "softmax"}}; }
  Shape output_shape(const Shape& in) const override { return in; }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out, LayerCache<T>&, const ForwardContext&) const override {
    softmax_forward(in, out);
  }
  void backward(const BasicTensor<T>&, const BasicTensor<T>& out, const BasicTensor<T>& dout, BasicTensor<T>* din,
                LayerCache<T>&, std::span<BasicTensor<T>>) const override {
    if (din) softmax_backward(out, dout, *din);
  }
};

}  // namespace emoser::nn
