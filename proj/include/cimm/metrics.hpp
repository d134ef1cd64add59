#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "tensor.hpp"

namespace cimm {

inline void require_same_geometry(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_geometry(b)) throw ShapeError(std::string(what) + ": image dimensions differ");
}

/// MSE over all samples and channels.
inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_geometry(a, b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

/// 10 log10(255^2 / MSE); +infinity when the images are identical.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double m = mse(a, b);
  if (m == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

/// PSNR on unit-scale tensors without quantization (peak 1).
template <typename T>
double psnr_unit(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "psnr_unit");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double m = acc / static_cast<double>(a.size());
  if (m == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

// ---------------------------------------------------------------------------
// Structural similarity: Gaussian window 11x11, sigma 1.5, K1 0.01, K2 0.03,
// dynamic range 255, averaged over all fully-contained windows.

struct SsimParams {
  static constexpr int window = 11;
  static constexpr double sigma = 1.5;
  static constexpr double k1 = 0.01;
  static constexpr double k2 = 0.03;
  static constexpr double range = 255.0;
};

inline std::array<double, SsimParams::window> ssim_gaussian_1d() {
  std::array<double, SsimParams::window> g{};
  const int r = SsimParams::window / 2;
  double sum = 0;
  for (int i = 0; i < SsimParams::window; ++i) {
    const double x = i - r;
    g[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2 * SsimParams::sigma * SsimParams::sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Combines local statistics into an SSIM value.
inline double ssim_from_moments(double mx, double my, double sxx, double syy, double sxy) {
  const double c1 = (SsimParams::k1 * SsimParams::range) * (SsimParams::k1 * SsimParams::range);
  const double c2 = (SsimParams::k2 * SsimParams::range) * (SsimParams::k2 * SsimParams::range);
  return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
}

namespace detail {

// Valid-mode separable filter of an H x W plane.
inline std::vector<double> gaussian_filter_valid(const std::vector<double>& src, int h, int w,
                                                 const std::array<double, SsimParams::window>& g) {
  const int k = SsimParams::window;
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * static_cast<std::size_t>(ow));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * src[static_cast<std::size_t>(y * w + x + t)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow));
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>((y + t) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  return out;
}

inline double ssim_channel(const ImageBuffer& a, const ImageBuffer& b, int c) {
  const int h = a.height, w = a.width;
  const auto g = ssim_gaussian_1d();
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (int r = 0; r < h; ++r)
    for (int q = 0; q < w; ++q) {
      const std::size_t i = static_cast<std::size_t>(r * w + q);
      x[i] = a.at(r, q, c);
      y[i] = b.at(r, q, c);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
  const auto mx = gaussian_filter_valid(x, h, w, g);
  const auto my = gaussian_filter_valid(y, h, w, g);
  const auto exx = gaussian_filter_valid(xx, h, w, g);
  const auto eyy = gaussian_filter_valid(yy, h, w, g);
  const auto exy = gaussian_filter_valid(xy, h, w, g);
  double acc = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    acc += ssim_from_moments(mx[i], my[i], exx[i] - mx[i] * mx[i], eyy[i] - my[i] * my[i], exy[i] - mx[i] * my[i]);
  }
  return acc / static_cast<double>(mx.size());
}

}  // namespace detail

/// Mean SSIM; color images average the per-channel scores.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_geometry(a, b, "ssim");
  if (a.height < SsimParams::window || a.width < SsimParams::window) {
    throw ShapeError("ssim: image smaller than the 11x11 window");
  }
  double acc = 0;
  for (int c = 0; c < a.channels; ++c) acc += detail::ssim_channel(a, b, c);
  return acc / a.channels;
}

}  // namespace cimm
