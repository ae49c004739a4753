#include "lgr/config.hpp"

#include "lgr/error.hpp"
#include "lgr/rng.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace lgr;
using namespace lgr::config;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const ExperimentConfig c = parse_config("");
  EXPECT_EQ(to_json(c), to_json(ExperimentConfig{}));
  EXPECT_EQ(c.training.epochs, 100);
  EXPECT_EQ(c.training.batch_size, 12);
  EXPECT_EQ(c.dataset.variant, "lensless");
}

TEST(Config, RoundTripIsIdentity) {
  ExperimentConfig c;
  c.seed = 18446744073709551557ull;
  c.dataset.root = "";
  c.dataset.height = 48;
  c.dataset.width = 64;
  c.dataset.variant = "admm";
  c.optics.noise_sigma = 0.0123456789012345;
  c.sampling.method = "erase";
  c.sampling.target_h = 150;
  c.sampling.target_w = 200;
  c.sampling.keep_fraction = 0.25;
  c.model.preset = "reduced";
  c.model.sfe_widths = {4, 8};
  c.training.lr_start = 3e-3;
  c.training.epochs = 7;
  c.recon.tv_weight = 1.0 / 3.0;
  c.recon.adaptive_rho = true;
  c.analysis.candidate_classes = {1, 4, 7};
  c.output.dir = "runs/a b: c";
  c.output.emit_panels = true;
  c.grid.table = "sampling";
  c.grid.cells = {"resize_100x75", "random_100x75"};
  const std::string yaml = to_yaml(c);
  const ExperimentConfig back = parse_config(yaml);
  EXPECT_EQ(to_json(back), to_json(c)) << yaml;
  EXPECT_EQ(to_yaml(back), yaml);
  EXPECT_EQ(back.recon.tv_weight, 1.0 / 3.0);

  const auto path = std::filesystem::temp_directory_path() / "lgr_config_roundtrip.yaml";
  save_config(path, c);
  EXPECT_EQ(to_json(load_config(path)), to_json(c));
}

TEST(Config, RejectsUnknownKeysAndSections) {
  const std::string a = error_of([] { parse_config("training:\n  epochz: 3\n"); });
  EXPECT_NE(a.find("training.epochz: unknown key"), std::string::npos) << a;
  const std::string b = error_of([] { parse_config("extras:\n  x: 1\n"); });
  EXPECT_NE(b.find("extras: unknown key"), std::string::npos) << b;
  // The training seed comes from the top-level seed only.
  EXPECT_NE(error_of([] { parse_config("training:\n  seed: 3\n"); }).find("unknown key"), std::string::npos);
}

TEST(Config, TypeErrorsAreReportedTogether) {
  const std::string msg = error_of([] {
    parse_config("training:\n  epochs: many\n  lr_start: [1]\nmodel:\n  sfe_widths: [4, x]\noutput:\n  emit_panels: 7\n");
  });
  EXPECT_NE(msg.find("training.epochs: expected integer, got 'many'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("training.lr_start: expected a number"), std::string::npos) << msg;
  EXPECT_NE(msg.find("model.sfe_widths[1]"), std::string::npos) << msg;
  EXPECT_NE(msg.find("output.emit_panels"), std::string::npos) << msg;
  EXPECT_THROW(parse_config("seed: -4\n"), Error);
  EXPECT_THROW(parse_config("epochs: 3.5\n"), Error);
  EXPECT_THROW(parse_config("training: [1, 2]\n"), Error);
  EXPECT_THROW(parse_config("training: {epochs: 3"), Error);
}

TEST(Config, SchemaVersionAndSemanticValidation) {
  EXPECT_NE(error_of([] { parse_config("schema_version: 2\n"); }).find("schema_version"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config("training:\n  lr_end: 0.5\n"); }).find("lr_start >= lr_end"),
            std::string::npos);
  EXPECT_THROW(parse_config("dataset:\n  variant: blurry\n"), Error);
  EXPECT_THROW(parse_config("sampling:\n  method: sideways\n"), Error);
  EXPECT_THROW(parse_config("model:\n  kind: lstm\n"), Error);
  EXPECT_THROW(parse_config("dataset:\n  root: /definitely/not/here\n"), Error);
  EXPECT_THROW(parse_config("optics:\n  psf: /definitely/not/here.png\n"), Error);
  EXPECT_THROW(parse_config("recon:\n  rho_tv: 0\n"), Error);
  EXPECT_THROW(parse_config("analysis:\n  candidate_classes: [0, 9]\n"), Error);
  EXPECT_THROW(parse_config("grid:\n  table: table5\n"), Error);
}

TEST(Config, OverridesWinOverTheDocument) {
  const std::string doc = "seed: 5\ntraining:\n  epochs: 10\n  lr_start: 0.002\n";
  const ExperimentConfig c = parse_config(doc, {"training.epochs=3", "seed=9", "model.sfe_widths=[2, 4]",
                                                "output.dir=a=b", "grid.cells=[x, y]"});
  EXPECT_EQ(c.training.epochs, 3);
  EXPECT_EQ(c.training.lr_start, 0.002);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.sfe_widths, (std::vector<int>{2, 4}));
  EXPECT_EQ(c.output.dir, "a=b");
  EXPECT_EQ(c.grid.cells, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(parse_config("", {"output.dir=key: value"}).output.dir, "key: value");

  EXPECT_THROW(parse_config(doc, {"training.epocs=3"}), Error);
  EXPECT_THROW(parse_config(doc, {"training=3"}), Error);
  EXPECT_THROW(parse_config(doc, {"training.epochs"}), Error);
  EXPECT_THROW(parse_config(doc, {"training.epochs=three"}), Error);
  EXPECT_THROW(parse_config(doc, {"training.epochs=0"}), Error);  // semantic check after overrides
}

TEST(Config, SeedsFanOutByLabel) {
  ExperimentConfig c;
  c.seed = 42;
  EXPECT_EQ(c.train_config("cell/a").seed, derive_seed(42, "cell/a"));
  EXPECT_NE(c.train_config("cell/a").seed, c.train_config("cell/b").seed);
  EXPECT_EQ(c.sample_spec().seed, derive_seed(42, "sampling"));
  EXPECT_EQ(c.noise_spec().model, optics::NoiseSpec::Model::none);
  c.optics.noise_sigma = 0.01;
  EXPECT_EQ(c.noise_spec().seed, derive_seed(42, "noise"));
}

TEST(Config, ModelSpecFromPresetAndOverrides) {
  ExperimentConfig c;
  const auto full = c.model_spec(models::ModelKind::raw3dnet, {240, 320});
  EXPECT_EQ(full, models::ModelSpec::defaults(models::ModelKind::raw3dnet));
  c.model.preset = "reduced";
  c.model.resnet_widths = {4, 6, 8};
  const auto r = c.model_spec(models::ModelKind::resnet3d, {48, 64});
  EXPECT_EQ(r.height, 48);
  EXPECT_EQ(r.resnet_widths, (std::vector<int>{4, 6, 8}));
  EXPECT_EQ(r.sfe_widths, models::ModelSpec::reduced(models::ModelKind::resnet3d, 48, 64).sfe_widths);
}

TEST(Config, CacheDirFallsBackToEnvironment) {
  ExperimentConfig c;
  ::setenv("LGR_CACHE_DIR", "/tmp/lgr-cache-env", 1);
  EXPECT_EQ(c.cache_dir(), "/tmp/lgr-cache-env");
  c.output.cache_dir = "/tmp/explicit";
  EXPECT_EQ(c.cache_dir(), "/tmp/explicit");
  ::unsetenv("LGR_CACHE_DIR");
  c.output.cache_dir.clear();
  EXPECT_TRUE(c.cache_dir().empty());
}
