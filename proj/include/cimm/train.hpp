#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dihedral.hpp"
#include "error.hpp"
#include "image.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace cimm {

struct TrainConfig {
  double base_lr = 1e-4;
  int lr_halving_period = 10;  // epochs
  int epochs = 40;
  int batch_size = 64;
  int patch_size = 40;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// 0 derives ceil(total_training_pixels / (batch_size * patch_size^2)).
  int iterations_per_epoch = 0;

  void validate() const {
    if (!(base_lr > 0)) throw ConfigError("base_lr must be > 0");
    if (lr_halving_period < 1) throw ConfigError("lr_halving_period must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must be in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
    if (iterations_per_epoch < 0) throw ConfigError("iterations_per_epoch must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Noise level on the 0-255 scale: a fixed sigma, or uniform over [lo, hi]
/// drawn independently per patch.
struct NoiseSpec {
  enum class Mode { Specific, Agnostic };
  Mode mode = Mode::Specific;
  double sigma = 25;
  double lo = 1;
  double hi = 50;

  static NoiseSpec specific(double s) {
    NoiseSpec n;
    n.mode = Mode::Specific;
    n.sigma = s;
    n.validate();
    return n;
  }
  static NoiseSpec agnostic(double lo = 1, double hi = 50) {
    NoiseSpec n;
    n.mode = Mode::Agnostic;
    n.lo = lo;
    n.hi = hi;
    n.validate();
    return n;
  }

  void validate() const {
    if (mode == Mode::Specific && !(sigma > 0)) throw ConfigError("noise sigma must be > 0");
    if (mode == Mode::Agnostic && !(lo > 0 && lo <= hi)) throw ConfigError("noise range needs 0 < lo <= hi");
  }

  /// A collapsed range draws nothing, so it matches Specific(lo) exactly.
  template <typename Rng>
  double sample(Rng& rng) const {
    if (mode == Mode::Specific) return sigma;
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }

  std::string to_string() const {
    std::ostringstream os;
    if (mode == Mode::Specific) {
      os << "specific:" << sigma;
    } else {
      os << "agnostic:" << lo << ":" << hi;
    }
    return os.str();
  }

  bool operator==(const NoiseSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Objective

template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;
};

/// (1/N) sum_i ||d_i - x_i||^2 with N the batch size; grad = (2/N)(d - x).
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& denoised, const Tensor<T>& clean) {
  detail::require_same_shape(denoised, clean, "mse_loss");
  const double inv_n = 1.0 / static_cast<double>(denoised.shape().n);
  LossResult<T> r;
  r.grad = Tensor<T>(denoised.shape());
  double acc = 0;
  for (std::size_t i = 0; i < denoised.size(); ++i) {
    const double diff = static_cast<double>(denoised[i]) - static_cast<double>(clean[i]);
    acc += diff * diff;
    r.grad[i] = static_cast<T>(2.0 * inv_n * diff);
  }
  r.loss = acc * inv_n;
  return r;
}

// ---------------------------------------------------------------------------
// Optimizer

/// lr = base_lr * 0.5^floor(epoch / lr_halving_period).
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return cfg.base_lr * std::pow(0.5, epoch / cfg.lr_halving_period);
}

/// Bias-corrected Adam on one parameter block with decoupled weight decay.
/// `step` is the 1-based step count after incrementing.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::int64_t step,
                 double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ShapeError("adam_update: parameter/gradient/moment sizes differ");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / c1;
    const double v_hat = vi / c2;
    const double p = params[i];
    params[i] = static_cast<T>(p - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon) - lr * cfg.weight_decay * p);
  }
}

/// Moments for every parameter block: block 2i is layer i's weights, 2i+1 its bias.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;

  static AdamState for_network(const Network<T>& net) {
    AdamState s;
    for (const auto& l : net.layers()) {
      s.m.emplace_back(l.weights.size(), T{0});
      s.m.emplace_back(l.bias.size(), T{0});
    }
    s.v = s.m;
    return s;
  }
};

template <typename T>
void adam_step(Network<T>& net, const Gradients<T>& grads, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
  if (grads.layers.size() != net.layer_count() || state.m.size() != 2 * net.layer_count()) {
    throw ShapeError("adam_step: gradient/state layout does not match the network");
  }
  ++state.step;
  auto layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    adam_update<T>(layers[i].weights.data(), grads.layers[i].weights.data(), state.m[2 * i], state.v[2 * i],
                   state.step, lr, cfg);
    adam_update<T>(layers[i].bias, grads.layers[i].bias, state.m[2 * i + 1], state.v[2 * i + 1], state.step, lr, cfg);
  }
}

// ---------------------------------------------------------------------------
// Data pipeline

/// patch + N(0, (sigma/255)^2) per element; not clipped.
template <typename T, typename Rng>
Tensor<T> add_gaussian_noise(const Tensor<T>& patch, double sigma_255, Rng& rng) {
  if (sigma_255 < 0) throw ConfigError("noise sigma must be >= 0");
  Tensor<T> out = patch;
  if (sigma_255 == 0) return out;
  std::normal_distribution<double> dist(0.0, sigma_255 / 255.0);
  for (auto& v : out.data()) v = static_cast<T>(static_cast<double>(v) + dist(rng));
  return out;
}

template <typename T>
struct Batch {
  Tensor<T> noisy;
  Tensor<T> clean;
  std::vector<double> sigmas;
};

template <typename T, typename Rng>
Batch<T> make_batch(std::span<const ImageBuffer> images, const TrainConfig& cfg, const NoiseSpec& noise, Rng& rng) {
  if (images.empty()) throw ConfigError("training set is empty");
  const int channels = images.front().channels;
  for (const auto& img : images) {
    if (img.channels != channels) throw ShapeError("training images mix grayscale and color");
    if (img.height < cfg.patch_size || img.width < cfg.patch_size) {
      throw ShapeError("training image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                       " is smaller than patch size " + std::to_string(cfg.patch_size));
    }
  }
  const auto P = static_cast<std::size_t>(cfg.patch_size);
  const Shape shape{static_cast<std::size_t>(cfg.batch_size), static_cast<std::size_t>(channels), P, P};
  Batch<T> b{Tensor<T>(shape), Tensor<T>(shape), {}};
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  std::uniform_int_distribution<int> sym(0, kDihedralCount - 1);
  const std::size_t stride = static_cast<std::size_t>(channels) * P * P;
  for (std::size_t n = 0; n < shape.n; ++n) {
    const ImageBuffer& img = images[pick(rng)];
    Tensor<T> clean = augment(random_crop<T>(img, cfg.patch_size, rng), sym(rng));
    const double sigma = noise.sample(rng);
    Tensor<T> noisy = add_gaussian_noise(clean, sigma, rng);
    std::copy(clean.data().begin(), clean.data().end(), b.clean.data().begin() + static_cast<std::ptrdiff_t>(n * stride));
    std::copy(noisy.data().begin(), noisy.data().end(), b.noisy.data().begin() + static_cast<std::ptrdiff_t>(n * stride));
    b.sigmas.push_back(sigma);
  }
  return b;
}

inline int derived_iterations_per_epoch(std::span<const ImageBuffer> images, const TrainConfig& cfg) {
  if (cfg.iterations_per_epoch > 0) return cfg.iterations_per_epoch;
  double pixels = 0;
  for (const auto& img : images) pixels += static_cast<double>(img.height) * img.width;
  const double per_step = static_cast<double>(cfg.batch_size) * cfg.patch_size * cfg.patch_size;
  return std::max(1, static_cast<int>(std::ceil(pixels / per_step)));
}

// ---------------------------------------------------------------------------
// Epoch loop

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainOptions {
  /// Snapshot every N epochs to "<prefix>.epoch<E>.ckpt"; 0 disables.
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_prefix;
  std::function<void(const StepRecord&)> on_step;
};

template <typename T>
TrainHistory train_loop(Network<T>& net, std::span<const ImageBuffer> images, const TrainConfig& cfg,
                        const NoiseSpec& noise, const TrainOptions& options = {}) {
  cfg.validate();
  noise.validate();
  TrainHistory history;
  if (cfg.epochs == 0) return history;
  const int iters = derived_iterations_per_epoch(images, cfg);
  std::mt19937_64 rng(cfg.seed);
  AdamState<T> state = AdamState<T>::for_network(net);
  ActivationCache<T> cache;
  history.steps.reserve(static_cast<std::size_t>(cfg.epochs) * static_cast<std::size_t>(iters));

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    for (int it = 0; it < iters; ++it, ++step) {
      Batch<T> batch = make_batch<T>(images, cfg, noise, rng);
      ForwardResult<T> fwd = forward(net, batch.noisy, &cache);
      LossResult<T> loss = mse_loss(fwd.denoised, batch.clean);
      if (!std::isfinite(loss.loss)) {
        std::ostringstream os;
        os << "non-finite training loss " << loss.loss << " at step " << step << " (epoch " << epoch << ", lr " << lr
           << ")";
        throw DivergenceError(os.str());
      }
      Gradients<T> grads = backward(net, cache, loss.grad);
      adam_step(net, grads, state, lr, cfg);
      StepRecord rec{step, epoch, lr, loss.loss};
      history.steps.push_back(rec);
      if (options.on_step) options.on_step(rec);
    }
    if (options.checkpoint_every > 0 && (epoch + 1) % options.checkpoint_every == 0) {
      std::filesystem::path p = options.checkpoint_prefix;
      p += ".epoch" + std::to_string(epoch + 1) + ".ckpt";
      save_checkpoint(p, net);
      history.checkpoints.push_back(p);
    }
  }
  return history;
}

inline void write_history_csv(const TrainHistory& history, std::ostream& os) {
  os << "step,epoch,lr,loss\n";
  os << std::setprecision(9);
  for (const auto& r : history.steps) os << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << '\n';
}

/// Mean of a trailing/leading window of losses, for smoke-level convergence checks.
inline double mean_loss(const TrainHistory& h, std::size_t first, std::size_t count) {
  if (first + count > h.steps.size() || count == 0) throw ConfigError("loss window out of range");
  double acc = 0;
  for (std::size_t i = first; i < first + count; ++i) acc += h.steps[i].loss;
  return acc / static_cast<double>(count);
}

}  // namespace cimm
