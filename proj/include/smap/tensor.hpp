#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "smap/errors.hpp"

namespace smap {

using Shape = std::vector<std::size_t>;

// Non-deduced read-only view, so callers may pass spans of mutable data.
template <typename T>
using ConstView = std::type_identity_t<std::span<const T>>;

std::string to_string(const Shape& shape);

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

// Dense row-major array (last axis fastest). Skymaps are laid out as
// (channel, energy, polar, azimuth).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access (c, d, h, w).
  T& at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
    return data_[offset4(c, d, h, w)];
  }
  const T& at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return data_[offset4(c, d, h, w)];
  }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape_));
    }
  }

  std::size_t offset4(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return ((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

struct Extent3 {
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  bool operator==(const Extent3&) const = default;
};

// Output extent along one axis for a valid (unpadded) window.
constexpr std::size_t window_out(std::size_t n, std::size_t k, std::size_t s) {
  return (n - k) / s + 1;
}

Shape conv3d_output_shape(const Shape& input, const Shape& kernels, Extent3 stride);

// Valid 3D convolution (cross-correlation), zero padding, no activation.
// input (C_in,D,H,W), kernels (C_out,C_in,kD,kH,kW), bias length C_out.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernels, ConstView<T> bias,
                 Extent3 stride);

template <typename T>
struct Conv3dGrads {
  Tensor<T> kernels;
  std::vector<T> bias;
  Tensor<T> input;  // empty unless requested
};

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                               const Tensor<T>& grad_output, Extent3 stride,
                               bool need_input_grad);

// Adds the kernel and bias gradients into the given buffers; the input
// gradient is written only when dinput is non-null.
template <typename T>
void conv3d_backward_accumulate(const Tensor<T>& input, const Tensor<T>& kernels,
                                const Tensor<T>& grad_output, Extent3 stride,
                                std::span<T> dkernels, std::span<T> dbias, Tensor<T>* dinput);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// 2x2x2 max pooling with stride 2; trailing remainders are dropped.
template <typename T>
PoolResult<T> maxpool3d(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_output,
                             std::span<const std::size_t> argmax, const Shape& input_shape);

// weight is (m, n).
template <typename T>
std::vector<T> linear(ConstView<T> input, const Tensor<T>& weight, ConstView<T> bias);

template <typename T>
struct LinearGrads {
  Tensor<T> weight;
  std::vector<T> bias;
  std::vector<T> input;
};

template <typename T>
LinearGrads<T> linear_backward(ConstView<T> input, const Tensor<T>& weight,
                               ConstView<T> grad_output);

// Accumulating form; an empty dinput skips the input gradient.
template <typename T>
void linear_backward_accumulate(ConstView<T> input, const Tensor<T>& weight,
                                ConstView<T> grad_output, std::span<T> dweight,
                                std::span<T> dbias, std::span<T> dinput);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
std::vector<T> relu(std::span<const T> x);

template <typename T>
std::vector<T> relu(const std::vector<T>& x) {
  return relu(std::span<const T>(x));
}

// Zeroes gradient entries where the forward activation was not positive.
template <typename T>
void relu_backward_inplace(std::span<T> grad, ConstView<T> activation);

template <typename T>
std::vector<T> softmax(std::span<const T> x);

template <typename T>
std::vector<T> softmax(const std::vector<T>& x) {
  return softmax(std::span<const T>(x));
}

template <typename T>
std::vector<T> log_softmax(std::span<const T> x);

template <typename T>
std::vector<T> log_softmax(const std::vector<T>& x) {
  return log_softmax(std::span<const T>(x));
}

}  // namespace smap
