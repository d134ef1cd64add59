#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace cimm {

/// 8-bit image, row-major with interleaved channels (H, W, C). Peak 255.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c, std::uint8_t fill = 0) : height(h), width(w), channels(c) {
    if (h < 1 || w < 1) throw ShapeError("image dimensions must be >= 1");
    if (c != 1 && c != 3) throw ShapeError("image channels must be 1 or 3");
    data.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill);
  }

  static constexpr int peak = 255;

  std::uint8_t& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                    static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                    static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }

  bool same_geometry(const ImageBuffer& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const ImageBuffer&) const = default;
};

// ---------------------------------------------------------------------------
// Netpbm codecs: binary P5 (grayscale) and P6 (RGB), maxval 255.

namespace detail {

inline void skip_ws_and_comments(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

inline long read_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* what) {
  skip_ws_and_comments(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError(std::string("malformed netpbm header: ") + what);
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1L << 30) throw FormatError(std::string("netpbm header value too large: ") + what);
  }
  return v;
}

}  // namespace detail

inline ImageBuffer decode_netpbm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("unsupported format: expected binary PGM (P5) or PPM (P6)");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const long w = detail::read_header_int(bytes, pos, "width");
  const long h = detail::read_header_int(bytes, pos, "height");
  const long maxval = detail::read_header_int(bytes, pos, "maxval");
  if (w < 1 || h < 1) throw FormatError("netpbm image has zero size");
  if (maxval > 255) throw FormatError("unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed netpbm header terminator");
  ++pos;  // single whitespace byte before the raster
  ImageBuffer img(static_cast<int>(h), static_cast<int>(w), channels);
  if (bytes.size() - pos < img.data.size()) throw FormatError("truncated netpbm raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.data.size(), img.data.begin());
  return img;
}

inline std::vector<std::uint8_t> encode_netpbm(const ImageBuffer& img) {
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

inline ImageBuffer load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void save_image(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_netpbm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open image for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image: " + path.string());
}

// ---------------------------------------------------------------------------
// Unit normalization between 8-bit buffers and 1xCxHxW tensors.

template <typename T>
Tensor<T> to_unit(const ImageBuffer& img) {
  Tensor<T> t(Shape{1, static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
                    static_cast<std::size_t>(img.width)});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(0, static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            static_cast<T>(img.at(y, x, c)) / T{255};
  return t;
}

/// Scales by 255, rounds half away from zero, clamps to [0, 255].
template <typename T>
std::uint8_t unit_to_byte(T v) {
  const double s = std::round(static_cast<double>(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

template <typename T>
ImageBuffer from_unit(const Tensor<T>& t, std::size_t sample = 0) {
  const Shape& s = t.shape();
  if (s.c != 1 && s.c != 3) throw ShapeError("from_unit needs 1 or 3 channels");
  ImageBuffer img(static_cast<int>(s.h), static_cast<int>(s.w), static_cast<int>(s.c));
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) = unit_to_byte(t.at(sample, c, y, x));
  return img;
}

// ---------------------------------------------------------------------------
// Random crops.

struct CropOrigin {
  int y = 0;
  int x = 0;
  bool operator==(const CropOrigin&) const = default;
};

/// Uniform top-left corner; depends only on the rng state and dimensions.
template <typename Rng>
CropOrigin random_crop_origin(int height, int width, int size, Rng& rng) {
  if (size < 1 || height < size || width < size) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than patch size " +
                     std::to_string(size));
  }
  std::uniform_int_distribution<int> ys(0, height - size);
  std::uniform_int_distribution<int> xs(0, width - size);
  CropOrigin o;
  o.y = ys(rng);
  o.x = xs(rng);
  return o;
}

template <typename T>
Tensor<T> crop(const ImageBuffer& img, CropOrigin origin, int size) {
  Tensor<T> t(Shape{1, static_cast<std::size_t>(img.channels), static_cast<std::size_t>(size),
                    static_cast<std::size_t>(size)});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        t.at(0, static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            static_cast<T>(img.at(origin.y + y, origin.x + x, c)) / T{255};
  return t;
}

template <typename T, typename Rng>
Tensor<T> random_crop(const ImageBuffer& img, int size, Rng& rng) {
  return crop<T>(img, random_crop_origin(img.height, img.width, size, rng), size);
}

// ---------------------------------------------------------------------------
// Datasets: directories of .pgm/.ppm files in lexicographic order.

enum class Split { Train, Eval };

struct Dataset {
  std::vector<std::filesystem::path> paths;
  Split split = Split::Train;

  bool empty() const { return paths.empty(); }
  std::size_t size() const { return paths.size(); }
};

inline bool is_netpbm_path(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm";
}

inline Dataset list_dataset(const std::filesystem::path& dir, Split split) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("dataset directory not found: " + dir.string());
  Dataset ds;
  ds.split = split;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_netpbm_path(entry.path())) ds.paths.push_back(entry.path());
  }
  std::sort(ds.paths.begin(), ds.paths.end());
  return ds;
}

/// Training and evaluation sets must not share files.
inline bool disjoint(const Dataset& a, const Dataset& b) {
  for (const auto& p : a.paths) {
    for (const auto& q : b.paths) {
      std::error_code ec;
      if (p == q || std::filesystem::equivalent(p, q, ec)) return false;
    }
  }
  return true;
}

inline std::vector<ImageBuffer> load_images(const Dataset& ds) {
  std::vector<ImageBuffer> out;
  out.reserve(ds.size());
  for (const auto& p : ds.paths) out.push_back(load_image(p));
  return out;
}

}  // namespace cimm
