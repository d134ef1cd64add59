#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conv.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace cimm {

/// Meta-structure of a chain of identity mapping modules.
struct NetworkConfig {
  int num_modules = 3;
  int pairs_per_module = 6;
  int channels = 64;
  int in_channels = 1;
  int kernel = 3;
  std::vector<int> dilations{1, 3, 3, 3, 3, 3};
  std::vector<int> paddings{1, 3, 3, 3, 3, 3};

  /// Sets paddings to d*(k-1)/2 for each dilation d (spatial preservation).
  NetworkConfig& with_dilations(std::vector<int> d) {
    dilations = std::move(d);
    paddings.clear();
    for (int v : dilations) paddings.push_back(v * (kernel - 1) / 2);
    return *this;
  }

  void validate() const {
    if (num_modules < 1) throw ConfigError("num_modules must be >= 1");
    if (pairs_per_module < 1) throw ConfigError("pairs_per_module must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (in_channels != 1 && in_channels != 3) throw ConfigError("in_channels must be 1 or 3");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be a positive odd integer");
    if (dilations.size() != static_cast<std::size_t>(pairs_per_module) || paddings.size() != dilations.size()) {
      throw ConfigError("dilation/padding schedules must have pairs_per_module entries");
    }
    for (std::size_t i = 0; i < dilations.size(); ++i) {
      if (dilations[i] < 1) throw ConfigError("dilations must be >= 1");
      if (paddings[i] != dilations[i] * (kernel - 1) / 2) {
        throw ConfigError("padding schedule must equal dilation*(kernel-1)/2 at every pair");
      }
    }
  }

  std::size_t conv_layer_count() const {
    return static_cast<std::size_t>(num_modules) * static_cast<std::size_t>(pairs_per_module) + 1;
  }

  bool operator==(const NetworkConfig&) const = default;
};

/// Receptive field of a stride-1 chain: 1 + sum (k-1)*d.
inline long long receptive_field(int num_layers, int kernel, std::span<const int> dilations) {
  if (num_layers < 1) throw ConfigError("receptive_field needs at least one layer");
  if (dilations.size() != 1 && dilations.size() != static_cast<std::size_t>(num_layers)) {
    throw ConfigError("dilations must have one entry or one per layer");
  }
  long long rf = 1;
  for (int l = 0; l < num_layers; ++l) {
    const int d = dilations.size() == 1 ? dilations[0] : dilations[static_cast<std::size_t>(l)];
    rf += static_cast<long long>(kernel - 1) * d;
  }
  return rf;
}

/// Receptive field of one module's residual branch.
inline long long module_receptive_field(const NetworkConfig& cfg) {
  return receptive_field(cfg.pairs_per_module, cfg.kernel, cfg.dilations);
}

/// Receptive field of the whole network (the longest path runs through every
/// conv layer; skips only shorten paths). The final conv uses d = 1.
inline long long network_receptive_field(const NetworkConfig& cfg) {
  std::vector<int> all;
  for (int m = 0; m < cfg.num_modules; ++m) all.insert(all.end(), cfg.dilations.begin(), cfg.dilations.end());
  all.push_back(1);
  return receptive_field(static_cast<int>(all.size()), cfg.kernel, all);
}

/// Exact weight + bias count over all M*L + 1 conv layers.
inline std::size_t param_count(const NetworkConfig& cfg) {
  cfg.validate();
  const std::size_t k2 = static_cast<std::size_t>(cfg.kernel) * static_cast<std::size_t>(cfg.kernel);
  const std::size_t c = static_cast<std::size_t>(cfg.channels);
  const std::size_t in = static_cast<std::size_t>(cfg.in_channels);
  const std::size_t lift = c * in * k2 + c;
  const std::size_t inner = c * c * k2 + c;
  const std::size_t final_layer = in * c * k2 + in;
  return lift + (cfg.conv_layer_count() - 2) * inner + final_layer;
}

/// All convolution layers of a CIMM network in declaration order:
/// module 0 pairs 0..L-1, module 1 ..., then the final noise-prediction conv.
template <typename T>
class Network {
 public:
  Network() = default;

  explicit Network(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto C = static_cast<std::size_t>(config_.channels);
    const auto in = static_cast<std::size_t>(config_.in_channels);
    const auto k = static_cast<std::size_t>(config_.kernel);
    for (int m = 0; m < config_.num_modules; ++m) {
      for (int l = 0; l < config_.pairs_per_module; ++l) {
        const std::size_t layer_in = (m == 0 && l == 0) ? in : C;
        layers_.emplace_back(C, layer_in, k, config_.dilations[static_cast<std::size_t>(l)],
                             config_.paddings[static_cast<std::size_t>(l)]);
      }
    }
    layers_.emplace_back(in, C, k, 1, (config_.kernel - 1) / 2);
  }

  const NetworkConfig& config() const { return config_; }

  std::size_t layer_count() const { return layers_.size(); }
  std::size_t layer_index(int module, int pair) const {
    return static_cast<std::size_t>(module) * static_cast<std::size_t>(config_.pairs_per_module) +
           static_cast<std::size_t>(pair);
  }

  const ConvParams<T>& layer(std::size_t i) const { return layers_.at(i); }
  const ConvParams<T>& layer(int module, int pair) const { return layers_.at(layer_index(module, pair)); }
  const ConvParams<T>& final_layer() const { return layers_.back(); }
  std::span<const ConvParams<T>> layers() const { return layers_; }

  /// Mutable access; invalidates activation caches from earlier forward passes.
  ConvParams<T>& mutable_layer(std::size_t i) {
    ++revision_;
    return layers_.at(i);
  }
  std::span<ConvParams<T>> mutable_layers() {
    ++revision_;
    return layers_;
  }

  std::uint64_t revision() const { return revision_; }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers_) total += l.parameter_count();
    return total;
  }

  void zero() {
    for (auto& l : mutable_layers()) {
      l.weights.fill(T{0});
      std::fill(l.bias.begin(), l.bias.end(), T{0});
    }
  }

  bool same_weights(const Network& other) const { return config_ == other.config_ && layers_ == other.layers_; }

 private:
  NetworkConfig config_;
  std::vector<ConvParams<T>> layers_;
  std::uint64_t revision_ = 0;
};

/// He-normal weights (std sqrt(2 / (in_channels * k^2))) and zero biases.
template <typename T>
Network<T> init_network(const NetworkConfig& config, std::uint64_t seed) {
  Network<T> net(config);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.mutable_layers()) {
    const double fan_in = static_cast<double>(layer.in_channels() * layer.kernel_h() * layer.kernel_w());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : layer.weights.data()) w = static_cast<T>(dist(rng));
  }
  return net;
}

/// Saved activations from a training-mode forward pass.
template <typename T>
struct ActivationCache {
  /// Post-ReLU input of every conv layer (declaration order); the final
  /// entry is the chain output o_M fed to the final conv. Positive entries
  /// double as the ReLU masks.
  std::vector<Tensor<T>> conv_inputs;
  /// First-pair output z of each module (the skip tensor).
  std::vector<Tensor<T>> skips;
  Shape input_shape{};
  const void* owner = nullptr;
  std::uint64_t revision = 0;

  bool valid() const { return owner != nullptr; }
};

template <typename T>
struct ForwardResult {
  Tensor<T> noise_estimate;
  Tensor<T> denoised;
};

/// Per-module forward: z0 = conv(relu(t)); u = z0; u = conv(relu(u)) for the
/// remaining pairs; output z0 + u. With a single pair the output is z0.
template <typename T>
ForwardResult<T> forward(const Network<T>& net, const Tensor<T>& y, ActivationCache<T>* cache = nullptr) {
  const NetworkConfig& cfg = net.config();
  if (y.shape().c != static_cast<std::size_t>(cfg.in_channels)) {
    throw ShapeError("network expects " + std::to_string(cfg.in_channels) + " channels, got " +
                     std::to_string(y.shape().c));
  }
  if (cache) {
    cache->conv_inputs.clear();
    cache->skips.clear();
    cache->input_shape = y.shape();
    cache->owner = nullptr;
  }
  Tensor<T> t = y;
  std::size_t idx = 0;
  for (int m = 0; m < cfg.num_modules; ++m) {
    Tensor<T> a = relu_forward(t);
    Tensor<T> z0 = conv2d_forward(a, net.layer(idx++));
    if (cache) cache->conv_inputs.push_back(std::move(a));
    if (cfg.pairs_per_module == 1) {
      t = std::move(z0);
      if (cache) cache->skips.push_back(t);
      continue;
    }
    Tensor<T> u = z0;
    for (int l = 1; l < cfg.pairs_per_module; ++l) {
      Tensor<T> al = relu_forward(u);
      u = conv2d_forward(al, net.layer(idx++));
      if (cache) cache->conv_inputs.push_back(std::move(al));
    }
    add_inplace(u, z0);
    if (cache) cache->skips.push_back(std::move(z0));
    t = std::move(u);
  }
  ForwardResult<T> result;
  result.noise_estimate = conv2d_forward(t, net.final_layer());
  result.denoised = sub(y, result.noise_estimate);
  if (cache) {
    cache->conv_inputs.push_back(std::move(t));
    cache->owner = &net;
    cache->revision = net.revision();
  }
  return result;
}

template <typename T>
struct Gradients {
  std::vector<ConvGrads<T>> layers;  // declaration order, as Network::layers()
  Tensor<T> input;

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& g : layers) total += g.weights.size() + g.bias.size();
    return total;
  }
};

/// Reverse-mode pass for the composition in forward(); grad_denoised is
/// dLoss/d(denoised).
template <typename T>
Gradients<T> backward(const Network<T>& net, const ActivationCache<T>& cache, const Tensor<T>& grad_denoised) {
  if (!cache.valid()) throw StaleCacheError("activation cache is empty; run a training-mode forward first");
  if (cache.owner != &net || cache.revision != net.revision()) {
    throw StaleCacheError("activation cache does not match the current network weights");
  }
  if (grad_denoised.shape() != cache.input_shape) {
    throw ShapeError("grad_denoised shape " + to_string(grad_denoised.shape()) + " does not match input " +
                     to_string(cache.input_shape));
  }
  const NetworkConfig& cfg = net.config();
  const std::size_t L = static_cast<std::size_t>(cfg.pairs_per_module);

  Gradients<T> grads;
  grads.layers.resize(net.layer_count());

  // denoised = y - noise, so the noise branch receives -grad.
  Tensor<T> g_noise = scale(grad_denoised, T{-1});
  auto fin = conv2d_backward(cache.conv_inputs.back(), net.final_layer(), g_noise);
  grads.layers.back() = std::move(fin.grads);
  Tensor<T> g_out = std::move(fin.grad_input);

  for (int m = cfg.num_modules - 1; m >= 0; --m) {
    const std::size_t base = static_cast<std::size_t>(m) * L;
    Tensor<T> g_z0;
    if (L == 1) {
      g_z0 = std::move(g_out);
    } else {
      Tensor<T> g_u = g_out;
      for (std::size_t l = L - 1; l >= 1; --l) {
        const Tensor<T>& a = cache.conv_inputs[base + l];
        auto r = conv2d_backward(a, net.layer(base + l), g_u);
        grads.layers[base + l] = std::move(r.grads);
        g_u = relu_backward(a, r.grad_input);
      }
      add_inplace(g_u, g_out);  // skip path into z0
      g_z0 = std::move(g_u);
    }
    const Tensor<T>& a0 = cache.conv_inputs[base];
    auto r0 = conv2d_backward(a0, net.layer(base), g_z0);
    grads.layers[base] = std::move(r0.grads);
    g_out = relu_backward(a0, r0.grad_input);
  }
  add_inplace(g_out, grad_denoised);  // direct path y -> denoised
  grads.input = std::move(g_out);
  return grads;
}

}  // namespace cimm
