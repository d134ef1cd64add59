#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cimm/commands.hpp"
#include "support/oracles.hpp"

using namespace cimm;
using cimm::testing::synthetic_image;
using cimm::testing::TempDir;

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_THROW(cfg.set("chanels", "8"), ConfigError);
  EXPECT_THROW(cfg.apply_override("channels"), ConfigError);
  EXPECT_THROW(cfg.set("channels", "eight"), ConfigError);
  EXPECT_THROW(cfg.set("noise", "gaussian"), ConfigError);
  EXPECT_THROW(cfg.apply_ini("[train]\nbogus = 1\n"), ConfigError);
  cfg.apply_override(" channels = 8 ");
  EXPECT_EQ(cfg.get_int("channels"), 8);
}

TEST(RunConfig, DefaultsMatchNetworkAndTrainDefaults) {
  RunConfig cfg;
  const NetworkConfig n = cfg.network_config();
  EXPECT_EQ(n.num_modules, 3);
  EXPECT_EQ(n.pairs_per_module, 6);
  EXPECT_EQ(n.channels, 64);
  EXPECT_EQ(n.dilations, (std::vector<int>{1, 3, 3, 3, 3, 3}));
  const TrainConfig t = cfg.train_config();
  EXPECT_EQ(t.base_lr, 1e-4);
  EXPECT_EQ(t.epochs, 40);
  EXPECT_EQ(t.batch_size, 64);
  EXPECT_EQ(t.patch_size, 40);
  EXPECT_EQ(cfg.sigmas(), (std::vector<double>{15, 25, 50}));
}

TEST(RunConfig, IniRoundTrip) {
  RunConfig cfg;
  cfg.set("modules", "2");
  cfg.set("dilations", "1,2,2");
  cfg.set("pairs", "3");
  cfg.set("noise", "agnostic:5:30");
  RunConfig back;
  back.apply_ini("# comment\n; other\n[net]\n" + cfg.to_ini());
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(back.network_config().dilations, (std::vector<int>{1, 2, 2}));

  TempDir dir("ini");
  std::ofstream(dir / "run.ini") << cfg.to_ini();
  RunConfig loaded;
  loaded.load_file(dir / "run.ini");
  EXPECT_EQ(loaded, cfg);
  EXPECT_THROW(loaded.load_file(dir / "missing.ini"), ConfigError);
}

TEST(RunConfig, ParseNoise) {
  auto s = parse_noise("specific:25");
  EXPECT_EQ(s.mode, NoiseSpec::Mode::Specific);
  EXPECT_EQ(s.sigma, 25);
  auto a = parse_noise("agnostic");
  EXPECT_EQ(a.mode, NoiseSpec::Mode::Agnostic);
  EXPECT_EQ(a.lo, 1);
  EXPECT_EQ(a.hi, 50);
  auto r = parse_noise("agnostic:10:20");
  EXPECT_EQ(r.lo, 10);
  EXPECT_EQ(r.hi, 20);
  EXPECT_THROW(parse_noise("agnostic:20:10"), ConfigError);
  EXPECT_THROW(parse_noise("specific"), ConfigError);
}

class CommandTest : public ::testing::Test {
 protected:
  RunConfig tiny() const {
    RunConfig cfg;
    cfg.set("modules", "1");
    cfg.set("pairs", "2");
    cfg.set("channels", "2");
    cfg.set("dilations", "1,2");
    cfg.set("epochs", "1");
    cfg.set("iterations_per_epoch", "2");
    cfg.set("batch_size", "2");
    cfg.set("patch_size", "16");
    cfg.set("checkpoint_every", "0");
    return cfg;
  }
  void write_zero_checkpoint(const std::filesystem::path& p, int channels = 1) const {
    NetworkConfig n = tiny().network_config();
    n.in_channels = channels;
    save_checkpoint(p, Network<float>(n));
  }
  TempDir dir_{"cli"};
  std::ostringstream out_, err_;
};

TEST_F(CommandTest, TrainMissingDirectoryIsUsageError) {
  RunConfig cfg = tiny();
  const std::string missing = (dir_ / "no_such_dir").string();
  cfg.set("train_dir", missing);
  EXPECT_EQ(cmd_train(cfg, out_, err_), kExitUsage);
  EXPECT_NE(err_.str().find(missing), std::string::npos);
}

TEST_F(CommandTest, TrainWritesCheckpointAndHistory) {
  std::filesystem::create_directory(dir_ / "train");
  for (int i = 0; i < 2; ++i)
    save_image(dir_ / "train" / ("t" + std::to_string(i) + ".pgm"), synthetic_image(24, 24, 20 + static_cast<std::uint64_t>(i)));
  RunConfig cfg = tiny();
  cfg.set("train_dir", (dir_ / "train").string());
  cfg.set("out", (dir_ / "m.ckpt").string());
  ASSERT_EQ(cmd_train(cfg, out_, err_), kExitOk) << err_.str();
  auto net = load_checkpoint<float>(dir_ / "m.ckpt");
  EXPECT_EQ(net.config(), cfg.network_config());
  std::ifstream hist(dir_ / "m.ckpt.history.csv");
  std::string header;
  std::getline(hist, header);
  EXPECT_EQ(header, "step,epoch,lr,loss");

  cfg.set("out", (dir_ / "m2.ckpt").string());
  ASSERT_EQ(cmd_train(cfg, out_, err_), kExitOk);
  EXPECT_EQ(encode_checkpoint(load_checkpoint<float>(dir_ / "m2.ckpt")), encode_checkpoint(net));
}

TEST_F(CommandTest, DenoiseChannelMismatch) {
  write_zero_checkpoint(dir_ / "gray.ckpt");
  save_image(dir_ / "c.ppm", synthetic_image(16, 16, 1, 3));
  RunConfig cfg = tiny();
  cfg.set("checkpoint", (dir_ / "gray.ckpt").string());
  EXPECT_EQ(cmd_denoise(cfg, {(dir_ / "c.ppm").string()}, out_, err_), kExitUsage);
  EXPECT_NE(err_.str().find("channel mismatch"), std::string::npos);
}

TEST_F(CommandTest, DenoiseZeroNetworkReturnsInput) {
  write_zero_checkpoint(dir_ / "zero.ckpt");
  auto img = synthetic_image(20, 30, 4);
  const auto input = dir_ / "in.pgm";
  save_image(input, img);
  RunConfig cfg = tiny();
  cfg.set("checkpoint", (dir_ / "zero.ckpt").string());
  ASSERT_EQ(cmd_denoise(cfg, {input.string()}, out_, err_), kExitOk) << err_.str();
  EXPECT_EQ(load_image(default_denoised_path(input, 1)), img);
  cfg.set("ensemble", "true");
  cfg.set("out", (dir_ / "ens.pgm").string());
  ASSERT_EQ(cmd_denoise(cfg, {input.string()}, out_, err_), kExitOk);
  EXPECT_EQ(load_image(dir_ / "ens.pgm"), img);
  EXPECT_EQ(default_denoised_path("a/b.ppm", 3), std::filesystem::path("a/b.ppm.denoised.ppm"));
}

TEST_F(CommandTest, DenoiseMissingCheckpointOrInput) {
  RunConfig cfg = tiny();
  cfg.set("checkpoint", (dir_ / "none.ckpt").string());
  EXPECT_EQ(cmd_denoise(cfg, {"x.pgm"}, out_, err_), kExitUsage);
  write_zero_checkpoint(dir_ / "zero.ckpt");
  cfg.set("checkpoint", (dir_ / "zero.ckpt").string());
  EXPECT_EQ(cmd_denoise(cfg, {(dir_ / "nope.pgm").string()}, out_, err_), kExitIo);
  std::ofstream(dir_ / "bad.ckpt") << "garbage";
  cfg.set("checkpoint", (dir_ / "bad.ckpt").string());
  EXPECT_EQ(cmd_denoise(cfg, {"x.pgm"}, out_, err_), kExitIo);
}

TEST_F(CommandTest, EvalEmptyDirectoryAndDeterminism) {
  write_zero_checkpoint(dir_ / "zero.ckpt");
  std::filesystem::create_directory(dir_ / "empty");
  RunConfig cfg = tiny();
  cfg.set("checkpoint", (dir_ / "zero.ckpt").string());
  cfg.set("eval_dir", (dir_ / "empty").string());
  EXPECT_EQ(cmd_eval(cfg, out_, err_), kExitUsage);

  std::filesystem::create_directory(dir_ / "eval");
  for (int i = 0; i < 2; ++i)
    save_image(dir_ / "eval" / ("e" + std::to_string(i) + ".pgm"), synthetic_image(24, 28, 30 + static_cast<std::uint64_t>(i)));
  cfg.set("eval_dir", (dir_ / "eval").string());
  cfg.set("timing", "false");
  std::ostringstream a, b;
  ASSERT_EQ(cmd_eval(cfg, a, err_), kExitOk) << err_.str();
  ASSERT_EQ(cmd_eval(cfg, b, err_), kExitOk);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind(kEvalCsvHeader, 0), 0u);

  std::ofstream(dir_ / "eval" / "z.pgm") << "P5\n3 3\n255\n";
  std::ostringstream c;
  EXPECT_EQ(cmd_eval(cfg, c, err_), kExitPartial);
}

TEST_F(CommandTest, InspectReportsCapacityAndReceptiveFields) {
  RunConfig cfg;
  const std::vector<ReceptiveFieldQuery> q = {{18, 1}, {9, 2}, {6, 3}};
  ASSERT_EQ(cmd_inspect(cfg, q, out_, err_), kExitOk);
  const std::string s = out_.str();
  EXPECT_NE(s.find("conv_layers: 19\n"), std::string::npos);
  EXPECT_NE(s.find("parameters: 628993\n"), std::string::npos);
  EXPECT_NE(s.find("module_receptive_field: 33\n"), std::string::npos);
  EXPECT_NE(s.find("network_receptive_field: 99\n"), std::string::npos);
  EXPECT_NE(s.find("receptive_field[18 layers, dilation 1]: 37\n"), std::string::npos);
  EXPECT_NE(s.find("receptive_field[9 layers, dilation 2]: 37\n"), std::string::npos);
  EXPECT_NE(s.find("receptive_field[6 layers, dilation 3]: 37\n"), std::string::npos);

  write_zero_checkpoint(dir_ / "zero.ckpt", 3);
  RunConfig from_ckpt;
  from_ckpt.set("checkpoint", (dir_ / "zero.ckpt").string());
  std::ostringstream o2;
  ASSERT_EQ(cmd_inspect(from_ckpt, {}, o2, err_), kExitOk);
  EXPECT_NE(o2.str().find("in_channels: 3\n"), std::string::npos);
}
