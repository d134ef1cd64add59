#pragma once

// Subcommand drivers behind the `cimm` executable. Each returns the process
// exit code: 0 success, 1 usage/config, 2 partial evaluation failure, 3 I/O.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "error.hpp"
#include "image.hpp"
#include "infer.hpp"
#include "network.hpp"
#include "train.hpp"

namespace cimm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitPartial = 2, kExitIo = 3 };

namespace detail {

// Stream used for batch cropping, decorrelated from the init stream.
inline std::uint64_t batch_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

inline std::filesystem::path require_dir(const RunConfig& cfg, const std::string& key) {
  const std::string& dir = cfg.get(key);
  if (dir.empty()) throw ConfigError(key + " is not set");
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw ConfigError("directory not found: " + dir);
  return dir;
}

inline Network<float> require_checkpoint(const RunConfig& cfg) {
  const std::string& path = cfg.get("checkpoint");
  if (path.empty()) throw ConfigError("checkpoint is not set");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError("checkpoint not found: " + path);
  return load_checkpoint<float>(path);
}

}  // namespace detail

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto dir = detail::require_dir(cfg, "train_dir");
    const NetworkConfig net_cfg = cfg.network_config();
    TrainConfig train_cfg = cfg.train_config();
    const NoiseSpec noise = cfg.noise_spec();
    const Dataset ds = list_dataset(dir, Split::Train);
    if (ds.empty()) throw ConfigError("no .pgm/.ppm images in " + dir.string());
    const std::vector<ImageBuffer> images = load_images(ds);
    for (const auto& img : images) {
      if (img.channels != net_cfg.in_channels) {
        throw ConfigError("channel mismatch: training images have " + std::to_string(img.channels) +
                          " channels, in_channels is " + std::to_string(net_cfg.in_channels));
      }
    }

    const std::filesystem::path ckpt = cfg.get("out").empty() ? "cimm.ckpt" : cfg.get("out");
    Network<float> net = init_network<float>(net_cfg, train_cfg.seed);
    train_cfg.seed = detail::batch_seed(train_cfg.seed);

    TrainOptions options;
    options.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every"));
    options.checkpoint_prefix = ckpt;
    const int iters = derived_iterations_per_epoch(images, train_cfg);
    options.on_step = [&](const StepRecord& r) {
      if ((r.step + 1) % iters == 0) {
        out << "epoch " << r.epoch + 1 << " step " << r.step + 1 << " lr " << r.lr << " loss " << r.loss << '\n';
      }
    };
    out << "training on " << images.size() << " images, " << iters << " steps/epoch, noise " << noise.to_string()
        << '\n';
    const TrainHistory history = train_loop(net, images, train_cfg, noise, options);

    save_checkpoint(ckpt, net);
    std::filesystem::path hist = ckpt;
    hist += ".history.csv";
    std::ofstream hs(hist);
    if (!hs) throw IoError("cannot write history: " + hist.string());
    write_history_csv(history, hs);
    out << "wrote " << ckpt.string() << " and " << hist.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

/// Default output path "<input>.denoised.pgm" (".ppm" for color).
inline std::filesystem::path default_denoised_path(const std::filesystem::path& input, int channels) {
  std::filesystem::path p = input;
  p += channels == 1 ? ".denoised.pgm" : ".denoised.ppm";
  return p;
}

inline int cmd_denoise(const RunConfig& cfg, const std::vector<std::string>& inputs, std::ostream& out,
                       std::ostream& err) {
  return detail::guarded(err, [&] {
    if (inputs.empty()) throw ConfigError("no input images given");
    if (!cfg.get("out").empty() && inputs.size() > 1) throw ConfigError("--out needs exactly one input image");
    const Network<float> net = detail::require_checkpoint(cfg);
    const bool ensemble = cfg.get_bool("ensemble");
    const int tile = static_cast<int>(cfg.get_int("tile"));
    for (const auto& input : inputs) {
      const ImageBuffer img = load_image(input);
      if (img.channels != net.config().in_channels) {
        throw ConfigError("channel mismatch: " + input + " has " + std::to_string(img.channels) +
                          " channels, checkpoint expects " + std::to_string(net.config().in_channels));
      }
      const Tensor<float> noisy = to_unit<float>(img);
      Tensor<float> result;
      if (ensemble) {
        result = self_ensemble(net, noisy);
      } else if (tile > 0) {
        result = denoise_tiled(net, noisy, tile, receptive_radius(net.config()));
      } else {
        result = denoise_image(net, noisy);
      }
      const std::filesystem::path dst =
          cfg.get("out").empty() ? default_denoised_path(input, img.channels) : std::filesystem::path(cfg.get("out"));
      save_image(dst, from_unit(result));
      out << input << " -> " << dst.string() << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto dir = detail::require_dir(cfg, "eval_dir");
    const Dataset ds = list_dataset(dir, Split::Eval);
    if (ds.empty()) throw ConfigError("no .pgm/.ppm images in " + dir.string());
    const Network<float> net = detail::require_checkpoint(cfg);
    EvalOptions options;
    options.ensemble = cfg.get_bool("ensemble");
    options.quantized = cfg.get_bool("quantized");
    options.tile = static_cast<int>(cfg.get_int("tile"));
    options.record_timing = cfg.get_bool("timing");
    const auto sigmas = cfg.sigmas();
    const EvalReport report =
        evaluate_dataset(net, ds, sigmas, static_cast<std::uint64_t>(cfg.get_int("seed")), options);
    if (cfg.get("out").empty()) {
      write_report_csv(report, out);
    } else {
      std::ofstream os(cfg.get("out"));
      if (!os) throw IoError("cannot write report: " + cfg.get("out"));
      write_report_csv(report, os);
    }
    for (const auto& f : report.failures) err << "failed: " << f << '\n';
    return static_cast<int>(report.complete() ? kExitOk : kExitPartial);
  });
}

struct ReceptiveFieldQuery {
  int layers = 1;
  int dilation = 1;
};

inline int cmd_inspect(const RunConfig& cfg, const std::vector<ReceptiveFieldQuery>& queries, std::ostream& out,
                       std::ostream& err) {
  return detail::guarded(err, [&] {
    NetworkConfig net_cfg;
    if (!cfg.get("checkpoint").empty()) {
      net_cfg = detail::require_checkpoint(cfg).config();
    } else {
      net_cfg = cfg.network_config();
    }
    out << "modules: " << net_cfg.num_modules << '\n';
    out << "pairs_per_module: " << net_cfg.pairs_per_module << '\n';
    out << "channels: " << net_cfg.channels << '\n';
    out << "in_channels: " << net_cfg.in_channels << '\n';
    out << "dilations:";
    for (int d : net_cfg.dilations) out << ' ' << d;
    out << '\n';
    out << "conv_layers: " << net_cfg.conv_layer_count() << '\n';
    out << "parameters: " << param_count(net_cfg) << '\n';
    out << "module_receptive_field: " << module_receptive_field(net_cfg) << '\n';
    out << "network_receptive_field: " << network_receptive_field(net_cfg) << '\n';
    for (const auto& q : queries) {
      const int d[] = {q.dilation};
      out << "receptive_field[" << q.layers << " layers, dilation " << q.dilation
          << "]: " << receptive_field(q.layers, net_cfg.kernel, d) << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

}  // namespace cimm
