#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cimm/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "flat key = value config file");
  cmd->add_option("--set", flags.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", flags.seed, "seed for initialization, cropping and noise (default 0)");
}

cimm::RunConfig build_config(const CommonFlags& flags) {
  cimm::RunConfig cfg;
  if (!flags.config.empty()) cfg.load_file(flags.config);
  for (const auto& o : flags.overrides) cfg.apply_override(o);
  if (!flags.seed.empty()) cfg.set("seed", flags.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cimm: chain-of-identity-mapping-modules Gaussian denoiser"};
  app.require_subcommand(1);
  app.footer("Set CIMM_THREADS to the convolution worker count (default 1).\nExit codes: 0 ok, 1 usage/config, "
             "2 partial evaluation failure, 3 I/O.");

  CommonFlags flags;
  std::string train_dir, eval_dir, checkpoint, out, noise, sigmas;
  bool ensemble = false;
  bool print_config = false;
  std::vector<std::string> inputs;
  std::vector<std::string> rf_queries;

  auto* train = app.add_subcommand("train", "train a network on a directory of PGM/PPM images");
  add_common(train, flags);
  train->add_option("--train-dir", train_dir, "training image directory");
  train->add_option("--noise", noise, "specific:<sigma> or agnostic (sigma uniform in [1,50]); default specific:25");
  train->add_option("--out", out, "checkpoint path (default cimm.ckpt)");
  train->add_flag("--print-config", print_config, "print the effective config and exit");

  auto* denoise = app.add_subcommand("denoise", "denoise images with a trained checkpoint");
  add_common(denoise, flags);
  denoise->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  denoise->add_option("--out", out, "output path (default <input>.denoised.pgm)");
  denoise->add_flag("--ensemble", ensemble, "average over the 8 flips/rotations");
  denoise->add_option("inputs", inputs, "input images")->required();

  auto* eval = app.add_subcommand("eval", "evaluate PSNR/SSIM over a directory at given noise levels");
  add_common(eval, flags);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--eval-dir", eval_dir, "evaluation image directory")->required();
  eval->add_option("--sigmas", sigmas, "comma-separated noise levels (default 15,25,50)");
  eval->add_option("--noise", noise, "single level as specific:<sigma>");
  eval->add_flag("--ensemble", ensemble, "average over the 8 flips/rotations");
  eval->add_option("--out", out, "CSV report path (default stdout)");

  auto* inspect = app.add_subcommand("inspect", "print layer count, parameter count and receptive fields");
  add_common(inspect, flags);
  inspect->add_option("--checkpoint", checkpoint, "read the structure from a checkpoint");
  inspect->add_option("--rf", rf_queries, "extra receptive-field query LAYERSxDILATION, e.g. 18x1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cimm::kExitUsage;
  }

  cimm::RunConfig cfg;
  try {
    cfg = build_config(flags);
    if (!train_dir.empty()) cfg.set("train_dir", train_dir);
    if (!eval_dir.empty()) cfg.set("eval_dir", eval_dir);
    if (!checkpoint.empty()) cfg.set("checkpoint", checkpoint);
    if (!out.empty()) cfg.set("out", out);
    if (ensemble) cfg.set("ensemble", "true");
    if (!sigmas.empty()) cfg.set("sigmas", sigmas);
    if (!noise.empty()) {
      if (eval->parsed()) {
        const auto spec = cimm::parse_noise(noise);
        if (spec.mode != cimm::NoiseSpec::Mode::Specific) throw cimm::ConfigError("eval --noise must be specific:<sigma>");
        cfg.set("sigmas", std::to_string(spec.sigma));
      } else {
        cfg.set("noise", noise);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cimm::kExitUsage;
  }

  if (train->parsed()) {
    if (print_config) {
      std::cout << cfg.to_ini();
      return cimm::kExitOk;
    }
    return cimm::cmd_train(cfg, std::cout, std::cerr);
  }
  if (denoise->parsed()) return cimm::cmd_denoise(cfg, inputs, std::cout, std::cerr);
  if (eval->parsed()) return cimm::cmd_eval(cfg, std::cout, std::cerr);

  std::vector<cimm::ReceptiveFieldQuery> queries;
  for (const auto& q : rf_queries) {
    const auto x = q.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(q);
      queries.push_back({std::stoi(q.substr(0, x)), std::stoi(q.substr(x + 1))});
    } catch (const std::exception&) {
      std::cerr << "error: --rf expects LAYERSxDILATION, got '" << q << "'\n";
      return cimm::kExitUsage;
    }
  }
  return cimm::cmd_inspect(cfg, queries, std::cout, std::cerr);
}
