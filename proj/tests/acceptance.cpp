// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cimm/cimm.hpp"
#include "support/oracles.hpp"

using namespace cimm;
using cimm::testing::synthetic_image;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

void run(int id, const std::string& name, const std::function<Outcome()>& fn) {
  try {
    report(id, name, fn());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

NetworkConfig smoke_config() {
  NetworkConfig cfg;
  cfg.num_modules = 1;
  cfg.pairs_per_module = 3;
  cfg.channels = 8;
  cfg.with_dilations({1, 3, 3});
  return cfg;
}

TrainConfig smoke_train_config() {
  TrainConfig cfg;
  cfg.base_lr = 1e-3;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 2000;
  cfg.batch_size = 16;
  cfg.patch_size = 40;
  cfg.seed = 2024;
  return cfg;
}

std::vector<ImageBuffer> image_set(int count, int h, int w, std::uint64_t seed0) {
  std::vector<ImageBuffer> out;
  for (int i = 0; i < count; ++i) out.push_back(synthetic_image(h, w, seed0 + static_cast<std::uint64_t>(i)));
  return out;
}

struct SmokeModel {
  Network<float> net;
  TrainHistory history;
  double seconds = 0;
};

const SmokeModel& smoke_model() {
  static const SmokeModel model = [] {
    const auto t0 = Clock::now();
    SmokeModel m{init_network<float>(smoke_config(), 7), {}, 0};
    const auto train = image_set(10, 96, 96, 100);
    m.history = train_loop(m.net, std::span<const ImageBuffer>(train), smoke_train_config(), NoiseSpec::specific(25));
    m.seconds = seconds_since(t0);
    return m;
  }();
  return model;
}

const std::vector<ImageBuffer>& held_out() {
  static const auto images = image_set(20, 64, 64, 500);
  return images;
}

std::vector<EvalRecord> evaluate_held_out(const Network<float>& net, bool ensemble) {
  EvalOptions opts;
  opts.ensemble = ensemble;
  opts.record_timing = false;
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < held_out().size(); ++i) {
    auto rng = eval_noise_rng(99, 25, i);
    recs.push_back(evaluate_image(net, held_out()[i], 25, rng, opts));
  }
  return recs;
}

Outcome conv_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> nc(1, 3), hw(1, 9), dil(1, 3);
  double worst = 0;
  int cases = 0;
  while (cases < 100) {
    const int d = dil(rng);
    const Shape s{static_cast<std::size_t>(nc(rng)), static_cast<std::size_t>(nc(rng)),
                  static_cast<std::size_t>(hw(rng)), static_cast<std::size_t>(hw(rng))};
    std::uniform_int_distribution<int> pad(0, d);
    const int p = pad(rng);
    if (static_cast<int>(std::min(s.h, s.w)) + 2 * p - 2 * d < 1) continue;
    auto x = cimm::testing::random_tensor<double>(s, rng);
    auto params = cimm::testing::random_conv<double>(static_cast<std::size_t>(nc(rng)), s.c, 3, d, p, rng);
    auto fast = conv2d_forward(x, params);
    auto ref = cimm::testing::reference_conv(x, params);
    if (!(fast.shape() == ref.shape())) return {false, "shape mismatch"};
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (fast[i] != ref[i]) worst = std::max(worst, rel_err(fast[i], ref[i]));
    }
    ++cases;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 10, fmt("100 cases, max rel err %.3g (<= 1e-6), %.2f s (< 10 s)", worst, t)};
}

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  NetworkConfig cfg;
  cfg.num_modules = 1;
  cfg.pairs_per_module = 2;
  cfg.channels = 2;
  cfg.with_dilations({1, 2});
  auto net = init_network<double>(cfg, 11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  for (auto& l : net.mutable_layers())
    for (auto& b : l.bias) b = small(rng);
  const auto y = cimm::testing::random_tensor<double>(Shape{2, 1, 8, 8}, rng, 0, 1);
  const auto x = cimm::testing::random_tensor<double>(Shape{2, 1, 8, 8}, rng, 0, 1);

  ActivationCache<double> cache;
  const auto fwd = forward(net, y, &cache);
  const auto loss = mse_loss(fwd.denoised, x);
  const auto grads = backward(net, cache, loss.grad);
  auto objective = [&] { return mse_loss(forward(net, y).denoised, x).loss; };

  double worst = 0;
  std::size_t checked = 0;
  auto check = [&](double analytic, double& param) {
    const double fd = cimm::testing::central_difference(param, 1e-5, objective);
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    worst = std::max(worst, std::abs(analytic - fd) / scale);
    ++checked;
  };
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& layer = net.mutable_layer(li);
    for (std::size_t i = 0; i < layer.weights.size(); ++i) check(grads.layers[li].weights[i], layer.weights[i]);
    for (std::size_t o = 0; o < layer.bias.size(); ++o) check(grads.layers[li].bias[o], layer.bias[o]);
  }
  const double t = seconds_since(t0);
  std::ostringstream os;
  os << checked << " parameters, " << fmt("max rel err %.3g (<= 1e-6), %.2f s (< 60 s)", worst, t);
  return {checked == net.parameter_count() && worst <= 1e-6 && t < 60, os.str()};
}

Outcome capacity() {
  const NetworkConfig cfg;
  const auto params = param_count(cfg);
  const int layers = cfg.conv_layer_count();
  const Network<float> net = init_network<float>(cfg, 0);
  const bool ok = params == 628993 && layers == 19 && net.parameter_count() == 628993 && net.layer_count() == 19;
  return {ok, "parameters " + std::to_string(params) + " (628993), conv layers " + std::to_string(layers) + " (19)"};
}

Outcome receptive_tradeoff() {
  const int d1[] = {1}, d2[] = {2}, d3[] = {3};
  const int a = receptive_field(18, 3, d1), b = receptive_field(9, 3, d2), c = receptive_field(6, 3, d3);
  return {a == 37 && b == 37 && c == 37,
          "18xd1=" + std::to_string(a) + ", 9xd2=" + std::to_string(b) + ", 6xd3=" + std::to_string(c) + " (37)"};
}

Outcome identity_soundness() {
  bool ok = true;
  for (int channels : {1, 3}) {
    NetworkConfig cfg;
    cfg.in_channels = channels;
    cfg.channels = 8;
    const Network<float> net(cfg);
    const auto y = to_unit<float>(synthetic_image(37, 45, 3, channels));
    ok = ok && denoise_image(net, y) == y && self_ensemble(net, y) == y;
  }
  return {ok, ok ? "denoise_image and self_ensemble bitwise identity (gray, color)" : "output differs from input"};
}

Outcome training_smoke() {
  const SmokeModel& m = smoke_model();
  const std::size_t window = 100;
  const double initial = mean_loss(m.history, 0, window);
  const double final_loss = mean_loss(m.history, m.history.steps.size() - window, window);
  const auto recs = evaluate_held_out(m.net, false);
  double noisy = 0, denoised = 0;
  for (const auto& r : recs) {
    noisy += r.psnr_noisy;
    denoised += r.psnr_denoised;
  }
  noisy /= static_cast<double>(recs.size());
  denoised /= static_cast<double>(recs.size());
  const double ratio = final_loss / initial, gain = denoised - noisy;
  const bool ok = m.history.steps.size() == 2000 && ratio <= 0.5 && gain >= 3 && recs.size() >= 10 &&
                  m.seconds < 15 * 60;
  std::ostringstream os;
  os << m.history.steps.size() << " steps, smoothed loss " << fmt("%.4g -> %.4g (ratio %.3f <= 0.5)", initial, final_loss, ratio)
     << ", " << recs.size() << " held-out images " << fmt("noisy %.2f dB denoised %.2f dB (gain %.2f >= 3)", noisy, denoised, gain)
     << fmt(", %.1f s (< 900 s)", m.seconds);
  return {ok, os.str()};
}

Outcome ensemble_non_degradation() {
  const SmokeModel& m = smoke_model();
  const auto single = evaluate_held_out(m.net, false);
  const auto ens = evaluate_held_out(m.net, true);
  double s = 0, e = 0;
  for (std::size_t i = 0; i < single.size(); ++i) {
    s += single[i].psnr_denoised;
    e += ens[i].psnr_denoised;
  }
  s /= static_cast<double>(single.size());
  e /= static_cast<double>(ens.size());
  return {ens.size() >= 20 && e >= s - 0.05,
          std::to_string(ens.size()) + " images, " + fmt("single %.3f dB, ensemble %.3f dB (>= single - 0.05)", s, e)};
}

Outcome noise_calibration() {
  Tensor<double> zero(Shape{1, 1, 1000, 1000});
  std::mt19937_64 rng(5);
  const auto n = add_gaussian_noise(zero, 25.0, rng);
  long double sum = 0, sq = 0;
  for (double v : n.data()) {
    sum += v;
    sq += static_cast<long double>(v) * v;
  }
  const double count = static_cast<double>(n.size());
  const double mean = static_cast<double>(sum / count);
  const double sd = std::sqrt(static_cast<double>(sq / count) - mean * mean);
  const double target = 25.0 / 255.0;
  const double sd_err = std::abs(sd - target) / target;

  cimm::testing::TempDir dir("accept_noise");
  for (int i = 0; i < 6; ++i)
    save_image(dir / ("n" + std::to_string(i) + ".pgm"), synthetic_image(128, 128, 700 + static_cast<std::uint64_t>(i)));
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_modules = 1;
  const Network<float> zero_net(cfg);
  const double sigmas[] = {25};
  EvalOptions opts;
  opts.record_timing = false;
  const auto rep = evaluate_dataset(zero_net, list_dataset(dir.path(), Split::Eval), sigmas, 3, opts);
  const double closed = 20 * std::log10(255.0 / 25.0);
  const double noisy = rep.sections.at(0).mean.psnr_noisy;
  const bool ok = n.size() == 1000000 && sd_err <= 0.01 && std::abs(noisy - closed) <= 0.3;
  return {ok, fmt("std %.6f vs %.6f (rel err %.4f <= 0.01)", sd, target, sd_err) +
                  fmt(", dataset noisy PSNR %.3f dB vs %.3f (|diff| <= 0.3)", noisy, closed)};
}

Outcome determinism() {
  const int saved = thread_count();
  set_thread_count(1);
  const auto train = image_set(3, 48, 48, 800);
  TrainConfig tc;
  tc.epochs = 2;
  tc.iterations_per_epoch = 5;
  tc.batch_size = 4;
  tc.patch_size = 24;
  tc.seed = 77;
  NetworkConfig nc = smoke_config();
  nc.channels = 4;
  auto run_once = [&] {
    auto net = init_network<float>(nc, 77);
    train_loop(net, std::span<const ImageBuffer>(train), tc, NoiseSpec::agnostic());
    return net;
  };
  const auto a = run_once(), b = run_once();
  set_thread_count(saved);
  const bool ckpt_same = encode_checkpoint(a) == encode_checkpoint(b);

  cimm::testing::TempDir dir("accept_det");
  for (int i = 0; i < 3; ++i)
    save_image(dir / ("d" + std::to_string(i) + ".pgm"), synthetic_image(40, 44, 900 + static_cast<std::uint64_t>(i)));
  const auto ds = list_dataset(dir.path(), Split::Eval);
  const double sigmas[] = {15, 25, 50};
  EvalOptions opts;
  opts.record_timing = false;
  std::ostringstream r1, r2;
  write_report_csv(evaluate_dataset(a, ds, sigmas, 5, opts), r1);
  write_report_csv(evaluate_dataset(b, ds, sigmas, 5, opts), r2);
  const bool eval_same = r1.str() == r2.str();
  return {ckpt_same && eval_same, std::string("checkpoints ") + (ckpt_same ? "identical" : "differ") + ", reports " +
                                      (eval_same ? "identical" : "differ")};
}

Outcome codec_metrics() {
  cimm::testing::TempDir dir("accept_codec");
  bool round_trip = true;
  for (int channels : {1, 3}) {
    const auto img = synthetic_image(31, 29, 17, channels);
    const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
    save_image(path, img);
    round_trip = round_trip && load_image(path) == img;
  }
  const ImageBuffer black(16, 16, 1, 0), white(16, 16, 1, 255), a(16, 16, 1, 100), b(16, 16, 1, 101);
  const double p0 = psnr(black, white), p1 = psnr(a, b);
  const bool psnr_ok = std::abs(p0) <= 1e-3 && std::abs(p1 - 48.1308) <= 1e-3 && std::isinf(psnr(a, a));

  const auto s1 = synthetic_image(40, 36, 18);
  const double self = ssim(s1, s1);
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0, 12);
  ImageBuffer s2 = s1;
  for (auto& v : s2.data) v = static_cast<std::uint8_t>(std::clamp(v + std::lround(g(rng)), 0L, 255L));
  const double fast = ssim(s1, s2), brute = cimm::testing::brute_force_ssim(s1, s2);
  const bool ssim_ok = self == 1.0 && std::abs(fast - brute) <= 1e-6;
  return {round_trip && psnr_ok && ssim_ok,
          std::string("round trip ") + (round_trip ? "ok" : "mismatch") + fmt(", psnr %.4f / %.4f dB", p0, p1) +
              fmt(", ssim(a,a)=%.17g, |ssim - brute| = %.3g", self, std::abs(fast - brute))};
}

}  // namespace

int main() {
  run(1, "convolution oracle", conv_oracle);
  run(2, "gradient exactness", gradient_exactness);
  run(3, "capacity regression", capacity);
  run(4, "receptive-field trade-off", receptive_tradeoff);
  run(5, "identity soundness", identity_soundness);
  run(6, "training smoke", training_smoke);
  run(7, "self-ensemble non-degradation", ensemble_non_degradation);
  run(8, "noise calibration", noise_calibration);
  run(9, "determinism", determinism);
  run(10, "codec/metric sanity", codec_metrics);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
