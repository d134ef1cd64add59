#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <new>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dihedral.hpp"
#include "error.hpp"
#include "image.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "train.hpp"

namespace cimm {

/// Single forward pass over the whole image.
template <typename T>
Tensor<T> denoise_image(const Network<T>& net, const Tensor<T>& noisy) {
  try {
    return forward(net, noisy).denoised;
  } catch (const std::bad_alloc&) {
    throw ResourceError("out of memory denoising a " + to_string(noisy.shape()) +
                        " input; retry with tiled inference");
  }
}

/// Pixels of context each side needed for an exact value at the tile core.
inline int receptive_radius(const NetworkConfig& cfg) {
  return static_cast<int>((network_receptive_field(cfg) - 1) / 2);
}

/// Denoises `tile` x `tile` cores, each padded by `overlap` pixels of real
/// image context. With overlap >= receptive_radius() the result equals
/// denoise_image() exactly.
template <typename T>
Tensor<T> denoise_tiled(const Network<T>& net, const Tensor<T>& noisy, int tile, int overlap) {
  if (tile < 1 || overlap < 0) throw ConfigError("tile must be >= 1 and overlap >= 0");
  const Shape& s = noisy.shape();
  Tensor<T> out(s);
  const long H = static_cast<long>(s.h), W = static_cast<long>(s.w);
  for (long y0 = 0; y0 < H; y0 += tile) {
    for (long x0 = 0; x0 < W; x0 += tile) {
      const long y1 = std::min(H, y0 + tile), x1 = std::min(W, x0 + tile);
      const long ey0 = std::max(0L, y0 - overlap), ex0 = std::max(0L, x0 - overlap);
      const long ey1 = std::min(H, y1 + overlap), ex1 = std::min(W, x1 + overlap);
      Tensor<T> piece(Shape{s.n, s.c, static_cast<std::size_t>(ey1 - ey0), static_cast<std::size_t>(ex1 - ex0)});
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
          for (long y = ey0; y < ey1; ++y)
            for (long x = ex0; x < ex1; ++x)
              piece.at(n, c, static_cast<std::size_t>(y - ey0), static_cast<std::size_t>(x - ex0)) =
                  noisy.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      Tensor<T> res = denoise_image(net, piece);
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
          for (long y = y0; y < y1; ++y)
            for (long x = x0; x < x1; ++x)
              out.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                  res.at(n, c, static_cast<std::size_t>(y - ey0), static_cast<std::size_t>(x - ex0));
    }
  }
  return out;
}

/// Mean over the 8 symmetries of inverse(denoise(transform(y))). Summed
/// pairwise so that eight equal branches average back to the same bits.
template <typename T>
Tensor<T> self_ensemble(const Network<T>& net, const Tensor<T>& noisy) {
  std::vector<Tensor<T>> branches;
  branches.reserve(kDihedralCount);
  for (int k = 0; k < kDihedralCount; ++k) {
    branches.push_back(dihedral_inverse_transform(denoise_image(net, dihedral_transform(noisy, k)), k));
  }
  Tensor<T> out(noisy.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T a = (branches[0][i] + branches[1][i]) + (branches[2][i] + branches[3][i]);
    const T b = (branches[4][i] + branches[5][i]) + (branches[6][i] + branches[7][i]);
    out[i] = (a + b) / T{8};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct EvalOptions {
  bool ensemble = false;
  /// PSNR on 8-bit quantized outputs; false measures the float output.
  bool quantized = true;
  /// > 0 selects tiled inference with this core size.
  int tile = 0;
  bool record_timing = true;
};

struct EvalRecord {
  std::string path;
  double sigma = 0;
  double psnr_noisy = 0;
  double psnr_denoised = 0;
  double ssim = 0;
  double ms = 0;
};

struct EvalSection {
  double sigma = 0;
  std::vector<EvalRecord> records;
  EvalRecord mean;  // path "mean"; arithmetic means of the records
};

struct EvalReport {
  std::vector<EvalSection> sections;
  std::vector<std::string> failures;  // "path: message" per skipped file

  bool complete() const { return failures.empty(); }
};

/// Deterministic per-image noise stream.
inline std::mt19937_64 eval_noise_rng(std::uint64_t seed, double sigma, std::size_t image_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(std::llround(sigma * 1000.0)), static_cast<std::uint32_t>(image_index)};
  return std::mt19937_64(seq);
}

template <typename T>
EvalRecord evaluate_image(const Network<T>& net, const ImageBuffer& clean, double sigma, std::mt19937_64& rng,
                          const EvalOptions& options) {
  EvalRecord rec;
  rec.sigma = sigma;
  const Tensor<T> clean_t = to_unit<T>(clean);
  const Tensor<T> noisy_t = add_gaussian_noise(clean_t, sigma, rng);
  const auto start = std::chrono::steady_clock::now();
  Tensor<T> denoised_t;
  if (options.ensemble) {
    denoised_t = self_ensemble(net, noisy_t);
  } else if (options.tile > 0) {
    denoised_t = denoise_tiled(net, noisy_t, options.tile, receptive_radius(net.config()));
  } else {
    denoised_t = denoise_image(net, noisy_t);
  }
  const auto stop = std::chrono::steady_clock::now();
  if (options.record_timing) rec.ms = std::chrono::duration<double, std::milli>(stop - start).count();
  const ImageBuffer denoised = from_unit(denoised_t);
  if (options.quantized) {
    rec.psnr_noisy = psnr(from_unit(noisy_t), clean);
    rec.psnr_denoised = psnr(denoised, clean);
  } else {
    rec.psnr_noisy = psnr_unit(noisy_t, clean_t);
    rec.psnr_denoised = psnr_unit(denoised_t, clean_t);
  }
  rec.ssim = ssim(denoised, clean);
  return rec;
}

inline EvalRecord mean_record(const std::vector<EvalRecord>& records, double sigma) {
  EvalRecord m;
  m.path = "mean";
  m.sigma = sigma;
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.psnr_noisy += r.psnr_noisy;
    m.psnr_denoised += r.psnr_denoised;
    m.ssim += r.ssim;
    m.ms += r.ms;
  }
  const double n = static_cast<double>(records.size());
  m.psnr_noisy /= n;
  m.psnr_denoised /= n;
  m.ssim /= n;
  m.ms /= n;
  return m;
}

/// One section per sigma, records in dataset (path) order. Files that fail
/// to load or process are listed in `failures` and skipped.
template <typename T>
EvalReport evaluate_dataset(const Network<T>& net, const Dataset& dataset, std::span<const double> sigmas,
                            std::uint64_t seed, const EvalOptions& options = {}) {
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  if (sigmas.empty()) throw ConfigError("no noise levels given");
  EvalReport report;
  std::vector<std::pair<std::size_t, ImageBuffer>> images;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      ImageBuffer img = load_image(dataset.paths[i]);
      if (img.channels != net.config().in_channels) {
        throw ShapeError("channel mismatch: image has " + std::to_string(img.channels) + ", network expects " +
                         std::to_string(net.config().in_channels));
      }
      images.emplace_back(i, std::move(img));
    } catch (const std::exception& e) {
      report.failures.push_back(dataset.paths[i].string() + ": " + e.what());
    }
  }
  for (double sigma : sigmas) {
    EvalSection section;
    section.sigma = sigma;
    for (const auto& [index, img] : images) {
      try {
        auto rng = eval_noise_rng(seed, sigma, index);
        EvalRecord rec = evaluate_image(net, img, sigma, rng, options);
        rec.path = dataset.paths[index].string();
        section.records.push_back(std::move(rec));
      } catch (const std::exception& e) {
        report.failures.push_back(dataset.paths[index].string() + ": " + e.what());
      }
    }
    section.mean = mean_record(section.records, sigma);
    report.sections.push_back(std::move(section));
  }
  return report;
}

namespace detail {
inline void write_csv_number(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
  } else {
    os << v;
  }
}
inline void write_csv_record(std::ostream& os, const EvalRecord& r) {
  os << r.path << ',';
  write_csv_number(os, r.sigma);
  os << ',';
  write_csv_number(os, r.psnr_noisy);
  os << ',';
  write_csv_number(os, r.psnr_denoised);
  os << ',';
  write_csv_number(os, r.ssim);
  os << ',';
  write_csv_number(os, r.ms);
  os << '\n';
}
}  // namespace detail

inline constexpr const char* kEvalCsvHeader = "path,sigma,psnr_noisy,psnr_denoised,ssim,ms";

/// Header once, then per sigma section: its records followed by a "mean" row.
inline void write_report_csv(const EvalReport& report, std::ostream& os) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::fixed << std::setprecision(6);
  os << kEvalCsvHeader << '\n';
  for (const auto& s : report.sections) {
    for (const auto& r : s.records) detail::write_csv_record(os, r);
    detail::write_csv_record(os, s.mean);
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace cimm
