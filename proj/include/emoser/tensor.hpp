#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emoser/error.hpp"

namespace emoser::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

/// Dense row-major tensor (last index fastest). Activations use H x W x C.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      fail(Errc::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // H x W x C access.
  T& at(std::size_t i, std::size_t j, std::size_t c) { return data_[(i * shape_[1] + j) * shape_[2] + c]; }
  const T& at(std::size_t i, std::size_t j, std::size_t c) const {
    return data_[(i * shape_[1] + j) * shape_[2] + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Resizes to `shape`, reusing storage; contents are unspecified unless
  /// `zero` is set.
  void reset(const Shape& shape, bool zero = false) {
    if (shape_ != shape) {
      shape_ = shape;
      data_.resize(shape_size(shape_));
    }
    if (zero) fill(T{0});
  }

  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
      fail(Errc::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Trainable tensor with its gradient and Adam moments (allocated on first
/// Adam step).
template <typename T>
struct Parameter {
  explicit Parameter(Shape shape) : value(shape), grad(shape) {}

  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> first_moment;
  BasicTensor<T> second_moment;
};

}  // namespace emoser::nn
