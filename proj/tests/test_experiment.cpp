#include "lgr/experiment.hpp"

#include "lgr/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace lgr;
using namespace lgr::experiment;
namespace fs = std::filesystem;

namespace {

// 30 sequences: six classes, five sequences each, 16 frames of 24x32.
fs::path fixture_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "lgr_experiment_fixture";
    fs::remove_all(r);
    dataset::FixtureSpec spec;
    spec.classes = {0, 1, 2, 3, 4, 5};
    spec.sequences_per_class = 5;
    spec.min_frames = 16;
    spec.max_frames = 16;
    spec.size = {24, 32};
    spec.seed = 3;
    dataset::write_gesture_fixture(r, spec);
    return r;
  }();
  return root;
}

config::ExperimentConfig small_config() {
  config::ExperimentConfig c;
  c.seed = 11;
  c.dataset.root = fixture_root().string();
  c.dataset.height = 24;
  c.dataset.width = 32;
  c.dataset.max_subvideos = 1;
  c.dataset.test_fraction = 0.2;
  c.dataset.val_fraction = 0.25;
  c.optics.psf_height = 9;
  c.optics.psf_width = 9;
  c.model.preset = "reduced";
  c.training.epochs = 1;
  c.training.batch_size = 8;
  c.recon.max_iters = 20;
  c.recon.restorer_epochs = 1;
  c.recon.restorer_frames = 16;
  c.output.dir = (fs::temp_directory_path() / "lgr_experiment_out").string();
  return c;
}

}  // namespace

TEST(Cells, SamplingBudgetsAtFullScale) {
  const auto cells = sampling_cells({240, 320}, 5);
  ASSERT_EQ(cells.size(), 5u);
  const long expected[] = {7500, 7500, 7500, 7500, 1850};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    ASSERT_TRUE(cells[i].sampling);
    EXPECT_EQ(cells[i].sampling->valid_pixels(), expected[i]) << cells[i].name;
    EXPECT_EQ(cells[i].model, models::ModelKind::raw3dnet);
    EXPECT_EQ(cells[i].variant, Variant::lensless);
  }
  EXPECT_EQ(cells[3].sampling->target, (Size2{150, 200}));
  EXPECT_EQ(cells[4].sampling->target, (Size2{37, 50}));
  const auto t3 = variant_cells();
  ASSERT_EQ(t3.size(), 5u);
  EXPECT_EQ(t3[4].model, models::ModelKind::raw3dnet);
  EXPECT_EQ(t3[1].variant, Variant::admm);
}

TEST(Cells, SelectionAndVariantNames) {
  config::ExperimentConfig c;
  c.grid.cells = {"lensless_raw3dnet", "original_resnet3d"};
  const auto cells = select_cells(c, {240, 320});
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].name, "lensless_raw3dnet");
  c.grid.cells = {"exp9"};
  EXPECT_THROW(select_cells(c, {240, 320}), Error);
  EXPECT_EQ(variant_from_string("admm"), Variant::admm);
  EXPECT_THROW(variant_from_string("holographic"), Error);
}

TEST(Geometry, ClassifierPaddingRules) {
  const auto raw = models::ModelSpec::defaults(models::ModelKind::raw3dnet);
  const auto res = models::ModelSpec::defaults(models::ModelKind::resnet3d);
  EXPECT_EQ(classifier_geometry({37, 50}, raw), (Size2{38, 50}));
  EXPECT_EQ(classifier_geometry({37, 50}, res), (Size2{37, 50}));
  EXPECT_EQ(classifier_geometry({8, 10}, raw), (Size2{16, 16}));
  EXPECT_EQ(classifier_geometry({240, 320}, raw), (Size2{240, 320}));
  VideoClip clip;
  clip.frames.assign(8, Plane::Constant(3, 2, 0.5));
  const VideoClip p = pad_clip(clip, {4, 5});
  EXPECT_EQ(p.frame_size(), (Size2{4, 5}));
  EXPECT_EQ(p.frames[0].sum(), 3.0);
  EXPECT_EQ(p.frames[0](2, 1), 0.5);
  EXPECT_EQ(p.frames[0](3, 4), 0.0);
  EXPECT_THROW(pad_clip(clip, {2, 2}), Error);
}

TEST(Samples, BinaryRoundTrip) {
  training::MemoryStream s;
  for (int i = 0; i < 3; ++i) {
    training::Sample x;
    x.source_id = "seq/" + std::to_string(i);
    x.illumination = i;
    x.clip.kind = i == 1 ? ClipKind::raw : ClipKind::scene;
    if (i != 2) x.clip.label = i;
    for (int f = 0; f < 8; ++f) x.clip.frames.push_back(Plane::Random(3, 5));
    s.push_back(x);
  }
  const auto path = fs::temp_directory_path() / "lgr_samples.smp";
  save_samples(path, s);
  const auto back = load_samples(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = s.samples()[i];
    const auto& b = back.samples()[i];
    EXPECT_EQ(a.source_id, b.source_id);
    EXPECT_EQ(a.illumination, b.illumination);
    EXPECT_EQ(a.clip.kind, b.clip.kind);
    EXPECT_EQ(a.clip.label, b.clip.label);
    for (int f = 0; f < 8; ++f) EXPECT_TRUE((a.clip.frames[f] == b.clip.frames[f]).all());
  }
}

TEST(Variants, MaterializeAndCache) {
  config::ExperimentConfig c = small_config();
  const auto cache = fs::temp_directory_path() / "lgr_variant_cache";
  fs::remove_all(cache);
  c.output.cache_dir = cache.string();
  const SceneData scenes = load_scene_data(c);
  EXPECT_EQ(scenes.manifest.sequences.size(), 30u);
  const long total = static_cast<long>(scenes.streams.train.size() + scenes.streams.val.size() + scenes.streams.test.size());
  EXPECT_EQ(total, 30);  // one sub-video per 16-frame sequence
  const auto camera = make_camera(c);

  const VariantData orig = build_variant(c, scenes, *camera, Variant::original);
  EXPECT_TRUE((orig.streams.test.samples()[0].clip.frames[3] == scenes.streams.test.samples()[0].clip.frames[3]).all());

  const VariantData lensless = build_variant(c, scenes, *camera, Variant::lensless);
  const auto& r0 = lensless.streams.train.samples()[0];
  EXPECT_EQ(r0.clip.kind, ClipKind::raw);
  EXPECT_EQ(r0.clip.label, scenes.streams.train.samples()[0].clip.label);
  EXPECT_EQ(r0.illumination, scenes.streams.train.samples()[0].illumination);
  EXPECT_TRUE((r0.clip.frames[0] == optics::forward_measure(scenes.streams.train.samples()[0].clip.frames[0], *camera).pixels).all());
  EXPECT_TRUE(fs::exists(cache));

  // A second build is served from the cache and matches bit for bit.
  const VariantData again = build_variant(c, scenes, *camera, Variant::lensless);
  EXPECT_EQ(again.digest, lensless.digest);
  EXPECT_TRUE((again.streams.val.samples()[1].clip.frames[5] == lensless.streams.val.samples()[1].clip.frames[5]).all());
  EXPECT_NE(build_variant(c, scenes, *camera, Variant::original).digest, lensless.digest);

  const VariantData admm = build_variant(c, scenes, *camera, Variant::admm);
  EXPECT_EQ(admm.streams.test.samples()[0].clip.kind, ClipKind::reconstructed);
  validate_clip(admm.streams.test.samples()[0].clip);

  const VariantData unet = build_variant(c, scenes, *camera, Variant::unet);
  ASSERT_TRUE(unet.restorer.has_value());
  EXPECT_EQ(unet.streams.train.samples()[0].clip.kind, ClipKind::reconstructed);
  validate_clip(unet.streams.train.samples()[0].clip);
  fs::remove_all(cache);
}

TEST(Variants, SamplingSharesOneMaskAndPads) {
  config::ExperimentConfig c = small_config();
  const SceneData scenes = load_scene_data(c);
  const auto camera = make_camera(c);
  const VariantData lensless = build_variant(c, scenes, *camera, Variant::lensless);
  sampling::SampleSpec spec;
  spec.method = sampling::Method::random;
  spec.target = {8, 10};
  spec.seed = 4;
  const auto proto = c.model_spec(models::ModelKind::raw3dnet, {24, 32});
  const SplitStreams out = apply_sampling(lensless.streams, spec, proto);
  const auto mask = sampling::make_mask(spec, {24, 32});
  const auto& in0 = lensless.streams.test.samples()[0].clip;
  const auto& out0 = out.test.samples()[0].clip;
  EXPECT_EQ(out0.frame_size(), (Size2{16, 16}));
  for (int f = 0; f < 8; ++f) {
    const Plane expected = sampling::downsample_frame(in0.frames[f], mask);
    EXPECT_TRUE((out0.frames[f].topLeftCorner(8, 10) == expected).all());
    EXPECT_EQ(out0.frames[f].bottomRows(8).abs().sum(), 0.0);
  }
}

TEST(Grid, TwoCellReportOnThirtySequenceFixture) {
  config::ExperimentConfig c = small_config();
  c.grid.cells = {"lensless_resnet3d", "lensless_raw3dnet"};
  const fs::path out = c.output.dir;
  fs::remove_all(out);
  GridOptions opts;
  opts.out_dir = out;
  opts.parallel = 2;
  const ExperimentReport report = run_experiment_grid(c, opts);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_GE(row.test.accuracy, 0.0);
    EXPECT_LE(row.test.accuracy, 1.0);
    EXPECT_EQ(row.test.total, static_cast<long>(row.test.predictions.size()));
    long sum = 0, trace = 0;
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        sum += row.test.confusion[i][j];
        if (i == j) trace += row.test.confusion[i][j];
      }
    EXPECT_EQ(sum, row.test.total);
    EXPECT_EQ(static_cast<double>(trace) / sum, row.test.accuracy);
    EXPECT_EQ(row.valid_pixels, 24 * 32);
    EXPECT_TRUE(fs::exists(out / row.checkpoint));
    EXPECT_TRUE(fs::exists(out / "cells" / row.spec.name / "history.csv"));
  }
  EXPECT_EQ(report.rows[0].seed, derive_seed(11, "cell/lensless_resnet3d"));
  EXPECT_NE(report.rows[0].seed, report.rows[1].seed);

  write_report(out, report);
  std::ifstream in(out / "report.json");
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j.at("rows").size(), 2u);
  EXPECT_TRUE(j.at("rows")[0].contains("seed"));
  EXPECT_TRUE(j.at("rows")[0].at("test").contains("confusion"));
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 11u);

  // The same config reproduces the same accuracies.
  GridOptions quiet;
  const ExperimentReport again = run_experiment_grid(c, quiet);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(again.rows[i].test.predictions, report.rows[i].test.predictions);
}

TEST(Grid, RejectsUnresolvableInputs) {
  config::ExperimentConfig c = small_config();
  c.dataset.root.clear();
  EXPECT_THROW(run_experiment_grid(c, {}), Error);
  c = small_config();
  c.optics.sensor_h = 20;
  c.optics.sensor_w = 28;
  const SceneData scenes = load_scene_data(c);
  const auto camera = make_camera(c);
  EXPECT_THROW(build_variant(c, scenes, *camera, Variant::unet), Error);
}

TEST(Panels, TileGeometry) {
  VideoClip a, b;
  for (int f = 0; f < 8; ++f) {
    a.frames.push_back(Plane::Random(6, 7));
    b.frames.push_back(Plane::Constant(6, 7, 0.3));
  }
  const auto path = fs::temp_directory_path() / "lgr_panel.png";
  write_panel(path, {&a, &b});
  const DecodedImage img = read_image(path);
  EXPECT_EQ(img.channels.front().rows(), 2 * 6 + 3 * 2);
  EXPECT_EQ(img.channels.front().cols(), 8 * 7 + 9 * 2);
}
