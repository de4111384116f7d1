#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "attrib/error.hpp"

namespace attrib {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense row-major tensor of rank 1..4. Layout is batch x channel x height x
// width with leading extents dropped for lower ranks (an image is C x H x W,
// a single heatmap is H x W, a logit vector is rank 1).
//
// T is float for benchmark runs and double for verification runs.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 (C x H x W) accessor.
  T& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

enum class ElementOp { kAdd, kSub, kMul, kDiv, kRelu, kExp };

// Binary ops combine a with b; unary ops (relu, exp) ignore b. Throws if
// shapes differ or any result is non-finite.
template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a, T b);
template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a);

// C x H x W -> C, the per-channel mean over both spatial axes.
template <typename T>
Tensor<T> reduce_mean_spatial(const Tensor<T>& t);

// Align-corners bilinear interpolation. Accepts H x W or C x H x W (each
// channel resized independently).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, std::size_t out_h,
                          std::size_t out_w);

// Linear rescale to [0, 1]. A constant tensor maps to all zeros.
template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& t);

// Throws attrib::Error naming `what` if any element is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what);

}  // namespace attrib
