#pragma once

// Checkpoint container, all integers little-endian u32 unless noted:
//
//   magic        8 bytes  "CIMMNET\0"
//   version      u32      1
//   scalar_bytes u32      4 (float32) or 8 (float64), IEEE-754 little-endian
//   num_modules, pairs_per_module, channels, in_channels, kernel   5 x u32
//   dilations    pairs_per_module x u32
//   paddings     pairs_per_module x u32
//   layer_count  u32      num_modules * pairs_per_module + 1
//   per layer, in declaration order:
//     out_ch, in_ch, kernel_h, kernel_w, dilation, padding          6 x u32
//     weights    out_ch*in_ch*kernel_h*kernel_w scalars (O, I, kh, kw order)
//     bias_len   u32 (= out_ch), then bias_len scalars

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "error.hpp"
#include "network.hpp"

namespace cimm {

inline constexpr char kCheckpointMagic[8] = {'C', 'I', 'M', 'M', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  template <typename S>
  void scalar(S v) {
    if constexpr (sizeof(S) == 4) {
      u32(std::bit_cast<std::uint32_t>(v));
    } else {
      u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  double scalar(std::uint32_t width) {
    if (width == 4) return static_cast<double>(std::bit_cast<float>(u32()));
    return std::bit_cast<double>(u64());
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Network<T>& net) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  const NetworkConfig& cfg = net.config();
  detail::ByteWriter out;
  out.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  out.u32(kCheckpointVersion);
  out.u32(sizeof(T));
  out.u32(static_cast<std::uint32_t>(cfg.num_modules));
  out.u32(static_cast<std::uint32_t>(cfg.pairs_per_module));
  out.u32(static_cast<std::uint32_t>(cfg.channels));
  out.u32(static_cast<std::uint32_t>(cfg.in_channels));
  out.u32(static_cast<std::uint32_t>(cfg.kernel));
  for (int d : cfg.dilations) out.u32(static_cast<std::uint32_t>(d));
  for (int p : cfg.paddings) out.u32(static_cast<std::uint32_t>(p));
  out.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& layer : net.layers()) {
    const Shape& s = layer.weights.shape();
    out.u32(static_cast<std::uint32_t>(s.n));
    out.u32(static_cast<std::uint32_t>(s.c));
    out.u32(static_cast<std::uint32_t>(s.h));
    out.u32(static_cast<std::uint32_t>(s.w));
    out.u32(static_cast<std::uint32_t>(layer.dilation));
    out.u32(static_cast<std::uint32_t>(layer.padding));
    for (T w : layer.weights.data()) out.scalar(w);
    out.u32(static_cast<std::uint32_t>(layer.bias.size()));
    for (T b : layer.bias) out.scalar(b);
  }
  return out.take();
}

/// Decodes a checkpoint of either stored precision into Network<T>.
template <typename T>
Network<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  char magic[8];
  in.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("not a CIMM checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t width = in.u32();
  if (width != 4 && width != 8) throw FormatError("unsupported checkpoint scalar width " + std::to_string(width));

  NetworkConfig cfg;
  cfg.num_modules = static_cast<int>(in.u32());
  cfg.pairs_per_module = static_cast<int>(in.u32());
  cfg.channels = static_cast<int>(in.u32());
  cfg.in_channels = static_cast<int>(in.u32());
  cfg.kernel = static_cast<int>(in.u32());
  if (cfg.pairs_per_module < 1 || cfg.pairs_per_module > 4096) throw FormatError("implausible pairs_per_module");
  cfg.dilations.assign(static_cast<std::size_t>(cfg.pairs_per_module), 0);
  cfg.paddings.assign(static_cast<std::size_t>(cfg.pairs_per_module), 0);
  for (auto& d : cfg.dilations) d = static_cast<int>(in.u32());
  for (auto& p : cfg.paddings) p = static_cast<int>(in.u32());
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint holds an invalid config: ") + e.what());
  }

  Network<T> net(cfg);
  const std::uint32_t count = in.u32();
  if (count != net.layer_count()) throw FormatError("checkpoint layer count does not match its config");
  for (auto& layer : net.mutable_layers()) {
    const Shape& s = layer.weights.shape();
    const std::uint32_t o = in.u32(), i = in.u32(), kh = in.u32(), kw = in.u32();
    const std::uint32_t d = in.u32(), p = in.u32();
    if (o != s.n || i != s.c || kh != s.h || kw != s.w || static_cast<int>(d) != layer.dilation ||
        static_cast<int>(p) != layer.padding) {
      throw FormatError("checkpoint layer geometry does not match its config");
    }
    for (auto& w : layer.weights.data()) w = static_cast<T>(in.scalar(width));
    if (in.u32() != layer.bias.size()) throw FormatError("checkpoint bias length mismatch");
    for (auto& b : layer.bias) b = static_cast<T>(in.scalar(width));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after checkpoint");
  return net;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint<T>(bytes);
}

}  // namespace cimm
