#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "tensor.hpp"

namespace cimm {

/// Weights (O, I, kh, kw) plus per-output bias for a stride-1 dilated
/// convolution with zero padding.
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  std::vector<T> bias;
  int dilation = 1;
  int padding = 0;

  ConvParams() = default;
  ConvParams(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, int dilation_, int padding_)
      : weights(Shape{out_channels, in_channels, kernel, kernel}),
        bias(out_channels, T{0}),
        dilation(dilation_),
        padding(padding_) {
    if (dilation < 1) throw ShapeError("dilation must be >= 1");
    if (padding < 0) throw ShapeError("padding must be >= 0");
  }

  std::size_t out_channels() const { return weights.shape().n; }
  std::size_t in_channels() const { return weights.shape().c; }
  std::size_t kernel_h() const { return weights.shape().h; }
  std::size_t kernel_w() const { return weights.shape().w; }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  bool operator==(const ConvParams&) const = default;
};

template <typename T>
struct ConvGrads {
  Tensor<T> weights;
  std::vector<T> bias;
};

/// Output spatial extent H + 2p - d(k-1); throws if it is below 1.
inline std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, int dilation, int padding) {
  const long long out = static_cast<long long>(extent) + 2LL * padding -
                        static_cast<long long>(dilation) * (static_cast<long long>(kernel) - 1);
  if (out < 1) {
    throw ShapeError("convolution output size " + std::to_string(out) + " is not positive");
  }
  return static_cast<std::size_t>(out);
}

template <typename T>
Shape conv_output_shape(const Shape& input, const ConvParams<T>& params) {
  if (input.c != params.in_channels()) {
    throw ShapeError("convolution expects " + std::to_string(params.in_channels()) + " input channels, got " +
                     std::to_string(input.c));
  }
  if (params.bias.size() != params.out_channels()) throw ShapeError("bias length does not match out channels");
  return Shape{input.n, params.out_channels(),
               conv_output_extent(input.h, params.kernel_h(), params.dilation, params.padding),
               conv_output_extent(input.w, params.kernel_w(), params.dilation, params.padding)};
}

namespace detail {

// Valid output range [lo, hi) for a tap at offset `shift` into an input of
// length `in_len`: output index q reads input q + shift.
inline void tap_range(long long shift, std::size_t in_len, std::size_t out_len, std::size_t& lo, std::size_t& hi) {
  const long long l = std::max(0LL, -shift);
  const long long h = std::min(static_cast<long long>(out_len), static_cast<long long>(in_len) - shift);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

}  // namespace detail

/// out[n,o,y,x] = bias[o] + sum_{i,u,v} in_pad[n,i,y+d*u,x+d*v] * w[o,i,u,v].
/// Each output pixel accumulates its taps in (i, u, v) order.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& params) {
  const Shape out_shape = conv_output_shape(input.shape(), params);
  const Shape& is = input.shape();
  Tensor<T> out(out_shape);
  const std::size_t kh = params.kernel_h(), kw = params.kernel_w();
  const long long d = params.dilation, p = params.padding;

  parallel_for(0, out_shape.c, [&](std::size_t o) {
    for (std::size_t n = 0; n < is.n; ++n) {
      T* dst = out.plane(n, o);
      std::fill(dst, dst + out_shape.plane(), params.bias[o]);
      for (std::size_t i = 0; i < is.c; ++i) {
        const T* src = input.plane(n, i);
        for (std::size_t u = 0; u < kh; ++u) {
          const long long dy = static_cast<long long>(u) * d - p;
          std::size_t y0, y1;
          detail::tap_range(dy, is.h, out_shape.h, y0, y1);
          for (std::size_t v = 0; v < kw; ++v) {
            const T wv = params.weights.at(o, i, u, v);
            const long long dx = static_cast<long long>(v) * d - p;
            std::size_t x0, x1;
            detail::tap_range(dx, is.w, out_shape.w, x0, x1);
            if (x0 >= x1 || y0 >= y1) continue;
            for (std::size_t y = y0; y < y1; ++y) {
              T* drow = dst + y * out_shape.w + x0;
              const T* srow = src + static_cast<std::size_t>((static_cast<long long>(y) + dy) * static_cast<long long>(is.w) +
                                                             static_cast<long long>(x0) + dx);
              for (std::size_t k = 0; k < x1 - x0; ++k) drow[k] += wv * srow[k];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
struct ConvBackwardResult {
  Tensor<T> grad_input;
  ConvGrads<T> grads;
};

/// Exact adjoint of conv2d_forward with respect to input, weights and bias.
template <typename T>
ConvBackwardResult<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& params,
                                      const Tensor<T>& grad_output, bool need_grad_input = true) {
  const Shape out_shape = conv_output_shape(input.shape(), params);
  if (grad_output.shape() != out_shape) {
    throw ShapeError("conv2d_backward: grad_output shape " + to_string(grad_output.shape()) + " expected " +
                     to_string(out_shape));
  }
  const Shape& is = input.shape();
  const std::size_t kh = params.kernel_h(), kw = params.kernel_w();
  const long long d = params.dilation, p = params.padding;

  ConvBackwardResult<T> result;
  result.grads.weights = Tensor<T>(params.weights.shape());
  result.grads.bias.assign(params.out_channels(), T{0});

  // Weight and bias gradients, one output channel per task.
  parallel_for(0, out_shape.c, [&](std::size_t o) {
    double bias_acc = 0;
    for (std::size_t n = 0; n < is.n; ++n) {
      const T* g = grad_output.plane(n, o);
      T row = 0;
      for (std::size_t k = 0; k < out_shape.plane(); ++k) row += g[k];
      bias_acc += row;
    }
    result.grads.bias[o] = static_cast<T>(bias_acc);
    for (std::size_t i = 0; i < is.c; ++i) {
      for (std::size_t u = 0; u < kh; ++u) {
        const long long dy = static_cast<long long>(u) * d - p;
        std::size_t y0, y1;
        detail::tap_range(dy, is.h, out_shape.h, y0, y1);
        for (std::size_t v = 0; v < kw; ++v) {
          const long long dx = static_cast<long long>(v) * d - p;
          std::size_t x0, x1;
          detail::tap_range(dx, is.w, out_shape.w, x0, x1);
          double acc = 0;
          if (x0 >= x1 || y0 >= y1) {
            result.grads.weights.at(o, i, u, v) = T{0};
            continue;
          }
          for (std::size_t n = 0; n < is.n; ++n) {
            const T* g = grad_output.plane(n, o);
            const T* src = input.plane(n, i);
            for (std::size_t y = y0; y < y1; ++y) {
              const T* grow = g + y * out_shape.w + x0;
              const T* srow = src + static_cast<std::size_t>((static_cast<long long>(y) + dy) * static_cast<long long>(is.w) +
                                                             static_cast<long long>(x0) + dx);
              T row = 0;
              for (std::size_t k = 0; k < x1 - x0; ++k) row += grow[k] * srow[k];
              acc += row;
            }
          }
          result.grads.weights.at(o, i, u, v) = static_cast<T>(acc);
        }
      }
    }
  });

  if (!need_grad_input) return result;

  // Input gradient, one input channel per task (scatter of each tap).
  result.grad_input = Tensor<T>(is);
  parallel_for(0, is.c, [&](std::size_t i) {
    for (std::size_t n = 0; n < is.n; ++n) {
      T* dst = result.grad_input.plane(n, i);
      for (std::size_t o = 0; o < out_shape.c; ++o) {
        const T* g = grad_output.plane(n, o);
        for (std::size_t u = 0; u < kh; ++u) {
          const long long dy = static_cast<long long>(u) * d - p;
          std::size_t y0, y1;
          detail::tap_range(dy, is.h, out_shape.h, y0, y1);
          for (std::size_t v = 0; v < kw; ++v) {
            const T wv = params.weights.at(o, i, u, v);
            const long long dx = static_cast<long long>(v) * d - p;
            std::size_t x0, x1;
            detail::tap_range(dx, is.w, out_shape.w, x0, x1);
            if (x0 >= x1 || y0 >= y1) continue;
            for (std::size_t y = y0; y < y1; ++y) {
              const T* grow = g + y * out_shape.w + x0;
              T* drow = dst + static_cast<std::size_t>((static_cast<long long>(y) + dy) * static_cast<long long>(is.w) +
                                                       static_cast<long long>(x0) + dx);
              for (std::size_t k = 0; k < x1 - x0; ++k) drow[k] += wv * grow[k];
            }
          }
        }
      }
    }
  });
  return result;
}

}  // namespace cimm
