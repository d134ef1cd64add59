#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "network.hpp"
#include "train.hpp"

namespace cimm {

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (...) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split(v, ',')) out.push_back(static_cast<int>(parse_int(key, item)));
  return out;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_double(key, item));
  return out;
}

}  // namespace detail

/// "specific:<sigma>", "agnostic" (range [1, 50]) or "agnostic:<lo>:<hi>".
inline NoiseSpec parse_noise(const std::string& text) {
  const auto parts = detail::split(text, ':');
  if (parts[0] == "specific") {
    if (parts.size() != 2) throw ConfigError("noise: expected specific:<sigma>, got '" + text + "'");
    return NoiseSpec::specific(detail::parse_double("noise", parts[1]));
  }
  if (parts[0] == "agnostic") {
    if (parts.size() == 1) return NoiseSpec::agnostic();
    if (parts.size() == 3) {
      return NoiseSpec::agnostic(detail::parse_double("noise", parts[1]), detail::parse_double("noise", parts[2]));
    }
  }
  throw ConfigError("noise: expected specific:<sigma> or agnostic[:lo:hi], got '" + text + "'");
}

enum class KeyKind { Int, Double, Bool, IntList, DoubleList, Noise, Path };

struct ConfigKey {
  const char* name;
  const char* default_value;
  KeyKind kind;
  const char* help;
};

// Defaults follow the published training recipe and module layout.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      {"modules", "3", KeyKind::Int, "identity mapping modules M (default 3)"},
      {"pairs", "6", KeyKind::Int, "ReLU+conv pairs per module L (default 6)"},
      {"channels", "64", KeyKind::Int, "feature channels C (default 64)"},
      {"in_channels", "1", KeyKind::Int, "image channels: 1 grayscale, 3 color"},
      {"kernel", "3", KeyKind::Int, "kernel size (default 3)"},
      {"dilations", "1,3,3,3,3,3", KeyKind::IntList, "per-pair dilation, padding equals dilation"},
      {"base_lr", "0.0001", KeyKind::Double, "initial learning rate (default 1e-4)"},
      {"lr_halving_period", "10", KeyKind::Int, "halve the learning rate every N epochs (default 10)"},
      {"epochs", "40", KeyKind::Int, "training epochs (default 40)"},
      {"batch_size", "64", KeyKind::Int, "patches per mini-batch (default 64)"},
      {"patch_size", "40", KeyKind::Int, "training patch side (default 40)"},
      {"weight_decay", "0.0001", KeyKind::Double, "decoupled weight decay (default 1e-4)"},
      {"beta1", "0.9", KeyKind::Double, "Adam momentum (default 0.9)"},
      {"beta2", "0.999", KeyKind::Double, "Adam second-moment decay (default 0.999)"},
      {"epsilon", "1e-08", KeyKind::Double, "Adam epsilon (default 1e-8)"},
      {"iterations_per_epoch", "0", KeyKind::Int, "steps per epoch, 0 derives it from the dataset pixel count"},
      {"checkpoint_every", "10", KeyKind::Int, "snapshot every N epochs, 0 disables"},
      {"seed", "0", KeyKind::Int, "seed for initialization, cropping and noise"},
      {"noise", "specific:25", KeyKind::Noise, "training noise: specific:<sigma> or agnostic (range [1,50])"},
      {"sigmas", "15,25,50", KeyKind::DoubleList, "evaluation noise levels"},
      {"ensemble", "false", KeyKind::Bool, "use the 8-way geometric self-ensemble"},
      {"quantized", "true", KeyKind::Bool, "compute PSNR on 8-bit outputs"},
      {"tile", "0", KeyKind::Int, "tiled inference core size, 0 for whole-image"},
      {"timing", "true", KeyKind::Bool, "record per-image wall time in reports"},
      {"train_dir", "", KeyKind::Path, "training image directory"},
      {"eval_dir", "", KeyKind::Path, "evaluation image directory"},
      {"checkpoint", "", KeyKind::Path, "checkpoint to load"},
      {"out", "", KeyKind::Path, "output path"},
  };
  return keys;
}

/// Flat key/value run configuration. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static const ConfigKey& key_info(const std::string& key) {
    for (const auto& k : config_schema()) {
      if (key == k.name) return k;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  void set(const std::string& key, const std::string& value) {
    const ConfigKey& info = key_info(key);
    check_value(info, value);
    values_[key] = value;
  }

  /// Applies "key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + assignment + "'");
    set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  }

  /// INI-style text: "key = value" lines, '#' or ';' comments; section
  /// headers are accepted and ignored.
  void apply_ini(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
      if (t.find('=') == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      }
      apply_override(t);
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_ini(ss.str());
  }

  std::string to_ini() const {
    std::ostringstream os;
    for (const auto& k : config_schema()) os << k.name << " = " << values_.at(k.name) << '\n';
    return os.str();
  }

  const std::string& get(const std::string& key) const {
    key_info(key);
    return values_.at(key);
  }
  long long get_int(const std::string& key) const { return detail::parse_int(key, get(key)); }
  double get_double(const std::string& key) const { return detail::parse_double(key, get(key)); }
  bool get_bool(const std::string& key) const { return detail::parse_bool(key, get(key)); }

  NetworkConfig network_config() const {
    NetworkConfig cfg;
    cfg.num_modules = static_cast<int>(get_int("modules"));
    cfg.pairs_per_module = static_cast<int>(get_int("pairs"));
    cfg.channels = static_cast<int>(get_int("channels"));
    cfg.in_channels = static_cast<int>(get_int("in_channels"));
    cfg.kernel = static_cast<int>(get_int("kernel"));
    cfg.with_dilations(detail::parse_int_list("dilations", get("dilations")));
    cfg.validate();
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.base_lr = get_double("base_lr");
    cfg.lr_halving_period = static_cast<int>(get_int("lr_halving_period"));
    cfg.epochs = static_cast<int>(get_int("epochs"));
    cfg.batch_size = static_cast<int>(get_int("batch_size"));
    cfg.patch_size = static_cast<int>(get_int("patch_size"));
    cfg.weight_decay = get_double("weight_decay");
    cfg.beta1 = get_double("beta1");
    cfg.beta2 = get_double("beta2");
    cfg.epsilon = get_double("epsilon");
    cfg.iterations_per_epoch = static_cast<int>(get_int("iterations_per_epoch"));
    cfg.seed = static_cast<std::uint64_t>(get_int("seed"));
    cfg.validate();
    return cfg;
  }

  NoiseSpec noise_spec() const { return parse_noise(get("noise")); }
  std::vector<double> sigmas() const { return detail::parse_double_list("sigmas", get("sigmas")); }

  bool operator==(const RunConfig&) const = default;

 private:
  static void check_value(const ConfigKey& info, const std::string& v) {
    switch (info.kind) {
      case KeyKind::Int:
        detail::parse_int(info.name, v);
        break;
      case KeyKind::Double:
        detail::parse_double(info.name, v);
        break;
      case KeyKind::Bool:
        detail::parse_bool(info.name, v);
        break;
      case KeyKind::IntList:
        detail::parse_int_list(info.name, v);
        break;
      case KeyKind::DoubleList:
        detail::parse_double_list(info.name, v);
        break;
      case KeyKind::Noise:
        parse_noise(v);
        break;
      case KeyKind::Path:
        break;
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace cimm
