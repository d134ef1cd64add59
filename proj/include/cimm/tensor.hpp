#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace cimm {

/// Batch-major NCHW extent.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
  return os.str();
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

/// Dense 4-D array in contiguous NCHW order. A default-constructed tensor is
/// empty; every shaped tensor has all dimensions >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape) {
    check_dims(shape);
    data_.assign(shape.size(), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    check_dims(shape);
    if (data_.size() != shape.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[index(n, c, y, x)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  /// Pointer to the H*W plane of sample n, channel c.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Copy of samples [first, first + count).
  Tensor slice_batch(std::size_t first, std::size_t count) const {
    if (first + count > shape_.n || count == 0) throw ShapeError("batch slice out of range");
    Shape s{count, shape_.c, shape_.h, shape_.w};
    const std::size_t stride = shape_.c * shape_.plane();
    return Tensor(s, std::vector<T>(data_.begin() + first * stride, data_.begin() + (first + count) * stride));
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor&) const = default;

 private:
  static void check_dims(const Shape& s) {
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
      throw ShapeError("tensor dimensions must be >= 1, got " + to_string(s));
    }
  }

  Shape shape_{};
  std::vector<T> data_;
};

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

/// a += b in place.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& in) {
  Tensor<T> out = in;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

/// Passes grad_output where input > 0; zero elsewhere, including at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  detail::require_same_shape(input, grad_output, "relu_backward");
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? grad_output[i] : T{0};
  return out;
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "dot");
  long double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
  return static_cast<T>(acc);
}

}  // namespace cimm
