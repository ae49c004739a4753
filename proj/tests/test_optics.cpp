#include "lgr/optics.hpp"

#include "lgr/error.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace lgr;
using namespace lgr::optics;

namespace {

double dot(const Plane& a, const Plane& b) { return (a * b).sum(); }
double norm(const Plane& a) { return std::sqrt(a.square().sum()); }

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lgr_optics_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

PointSpreadFunction random_psf(Size2 size, Rng& rng) {
  return make_psf(oracle::random_plane(size.height, size.width, rng, 0.0, 1.0) + 1e-3, "random");
}

}  // namespace

TEST(Forward, EightByEightMatchesDirectOracle) {
  Rng rng(1);
  const Plane scene = oracle::random_plane(8, 8, rng);
  const auto psf = random_psf({3, 3}, rng);
  const auto b = forward_measure(scene, psf);
  const Plane expected = oracle::direct_forward(scene, psf.grid, 8, 8);
  EXPECT_LT((b.pixels - expected).abs().maxCoeff(), 1e-6);
  EXPECT_FALSE(b.noise_applied);
}

TEST(Forward, FftMatchesDirectOnRandomSmallInstances) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int hs = 1 + static_cast<int>(rng.uniform_index(16)), ws = 1 + static_cast<int>(rng.uniform_index(16));
    const int hp = 1 + static_cast<int>(rng.uniform_index(std::min(5, hs)));
    const int wp = 1 + static_cast<int>(rng.uniform_index(std::min(5, ws)));
    const Plane scene = oracle::random_plane(hs, ws, rng);
    const auto psf = random_psf({hp, wp}, rng);
    const auto b = forward_measure(scene, psf);
    const Plane expected = oracle::direct_forward(scene, psf.grid, hs, ws);
    ASSERT_LT((b.pixels - expected).abs().maxCoeff(), 1e-6)
        << "scene " << hs << "x" << ws << " psf " << hp << "x" << wp;
  }
}

TEST(Forward, SmallerSensorAndLargerPaddingMatchOracle) {
  Rng rng(3);
  const Plane scene = oracle::random_plane(12, 14, rng);
  const auto psf = random_psf({5, 4}, rng);
  const auto geometry = SensorGeometry::centered({12, 14}, {5, 4}, {9, 10}, {20, 24});
  const LenslessCamera cam(geometry, psf);
  const Plane expected = oracle::direct_forward(scene, psf.grid, 9, 10);
  EXPECT_LT((cam.apply(scene) - expected).abs().maxCoeff(), 1e-9);
}

TEST(Forward, CenteredDeltaIsIdentity) {
  Rng rng(4);
  for (Size2 s : {Size2{1, 1}, Size2{3, 3}, Size2{4, 4}, Size2{5, 2}}) {
    const Plane scene = oracle::random_plane(10, 12, rng);
    const auto b = forward_measure(scene, delta_psf(s));
    EXPECT_LT((b.pixels - scene).abs().maxCoeff(), 1e-12) << s.height << "x" << s.width;
  }
}

TEST(Forward, ZeroSceneGivesZeroMeasurement) {
  Rng rng(5);
  const auto b = forward_measure(Plane::Zero(16, 16), random_psf({5, 5}, rng));
  EXPECT_EQ(b.pixels.abs().maxCoeff(), 0.0);
}

TEST(Forward, Linearity) {
  Rng rng(6);
  const auto psf = synthesize_caustic_psf({9, 11}, 13);
  const LenslessCamera cam(SensorGeometry::centered({30, 40}, psf.size()), psf);
  for (int trial = 0; trial < 10; ++trial) {
    const Plane x1 = oracle::random_plane(30, 40, rng), x2 = oracle::random_plane(30, 40, rng);
    const double a = rng.uniform(0.0, 2.0), b = rng.uniform(0.0, 2.0);
    const Plane lhs = forward_measure(a * x1 + b * x2, cam).pixels;
    const Plane rhs = a * forward_measure(x1, cam).pixels + b * forward_measure(x2, cam).pixels;
    EXPECT_LE(norm(lhs - rhs), 1e-6 * norm(rhs));
  }
}

TEST(Forward, NonNegativeWithNoise) {
  Rng rng(7);
  const Plane scene = oracle::random_plane(20, 20, rng, 0.0, 0.05);
  const auto psf = gaussian_psf({5, 5}, 1.0);
  const auto b = forward_measure(scene, psf, NoiseSpec::gaussian(0.2, 99));
  EXPECT_TRUE(b.noise_applied);
  EXPECT_GE(b.pixels.minCoeff(), 0.0);
  EXPECT_EQ(b.pixels.minCoeff(), 0.0);  // sigma far above signal, so clamping must occur
  const auto again = forward_measure(scene, psf, NoiseSpec::gaussian(0.2, 99));
  EXPECT_TRUE((b.pixels == again.pixels).all());
  const auto other = forward_measure(scene, psf, NoiseSpec::gaussian(0.2, 100));
  EXPECT_FALSE((b.pixels == other.pixels).all());
}

TEST(Forward, GeometryMismatchThrows) {
  const auto psf = gaussian_psf({5, 5}, 1.0);
  const LenslessCamera cam(SensorGeometry::centered({16, 16}, {5, 5}), psf);
  EXPECT_THROW(forward_measure(Plane::Zero(16, 17), cam), Error);
  EXPECT_THROW(LenslessCamera(SensorGeometry::centered({16, 16}, {3, 3}), psf), Error);
  EXPECT_THROW(SensorGeometry::centered({16, 16}, {5, 5}, {4, 4}), Error);
  EXPECT_THROW(SensorGeometry::centered({16, 16}, {5, 5}, {}, {18, 20}), Error);
}

TEST(Adjoint, DotProductIdentityDefaultGeometry) {
  Rng rng(8);
  const auto psf = synthesize_caustic_psf({240, 320}, 1);
  const LenslessCamera cam(SensorGeometry::centered({240, 320}, psf.size()), psf);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Plane x = oracle::random_plane(240, 320, rng, -1.0, 1.0);
    const Plane y = oracle::random_plane(240, 320, rng, -1.0, 1.0);
    const Plane ax = cam.apply(x);
    const double err = std::abs(dot(ax, y) - dot(x, adjoint_apply({y, false}, cam))) / (norm(ax) * norm(y));
    worst = std::max(worst, err);
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Adjoint, DotProductIdentityOtherGeometries) {
  Rng rng(9);
  struct Case {
    Size2 scene, psf, sensor, padded;
  };
  const Case cases[] = {
      {{16, 16}, {5, 5}, {}, {}},          {{13, 17}, {4, 6}, {}, {}},       {{20, 24}, {7, 3}, {10, 12}, {}},
      {{12, 12}, {3, 3}, {12, 12}, {32, 32}}, {{9, 30}, {1, 1}, {}, {}},    {{11, 7}, {6, 7}, {8, 7}, {17, 14}},
  };
  for (const Case& c : cases) {
    const auto psf = random_psf(c.psf, rng);
    const LenslessCamera cam(SensorGeometry::centered(c.scene, c.psf, c.sensor, c.padded), psf);
    const Size2 sensor = cam.geometry().sensor;
    for (int trial = 0; trial < 20; ++trial) {
      const Plane x = oracle::random_plane(c.scene.height, c.scene.width, rng, -1.0, 1.0);
      const Plane y = oracle::random_plane(sensor.height, sensor.width, rng, -1.0, 1.0);
      const Plane ax = cam.apply(x);
      const double err = std::abs(dot(ax, y) - dot(x, cam.adjoint(y))) / (norm(ax) * norm(y));
      ASSERT_LE(err, 1e-6);
    }
  }
}

TEST(Adjoint, ZeroAndDeltaCases) {
  Rng rng(10);
  const auto psf = random_psf({5, 5}, rng);
  EXPECT_EQ(adjoint_apply({Plane::Zero(16, 16), false}, psf, {16, 16}).abs().maxCoeff(), 0.0);
  const Plane y = oracle::random_plane(16, 16, rng);
  for (Size2 s : {Size2{1, 1}, Size2{3, 3}, Size2{4, 4}}) {
    const Plane back = adjoint_apply({y, false}, delta_psf(s), {16, 16});
    EXPECT_LT((back - y).abs().maxCoeff(), 1e-12);
  }
}

TEST(Adjoint, MatchesDirectCorrelationOracle) {
  // A^T y by brute force: transpose of the direct convolution-then-crop map.
  Rng rng(11);
  const int hs = 7, ws = 9;
  const auto psf = random_psf({3, 4}, rng);
  const LenslessCamera cam(SensorGeometry::centered({hs, ws}, psf.size()), psf);
  const Plane y = oracle::random_plane(hs, ws, rng);
  Plane expected = Plane::Zero(hs, ws);
  for (int r = 0; r < hs; ++r)
    for (int c = 0; c < ws; ++c) {
      Plane e = Plane::Zero(hs, ws);
      e(r, c) = 1.0;
      expected(r, c) = dot(oracle::direct_forward(e, psf.grid, hs, ws), y);
    }
  EXPECT_LT((cam.adjoint(y) - expected).abs().maxCoeff(), 1e-12);
}

TEST(CropPad, CropOfPadIsIdentityAndPadOfCropIsProjection) {
  Rng rng(12);
  const auto psf = random_psf({5, 7}, rng);
  const LenslessCamera cam(SensorGeometry::centered({20, 18}, psf.size(), {16, 14}), psf);
  const Plane y = oracle::random_plane(16, 14, rng);
  EXPECT_TRUE((cam.crop(cam.pad(y)) == y).all());
  const Size2 p = cam.geometry().padded;
  const Plane z = oracle::random_plane(p.height, p.width, rng);
  const Plane once = cam.pad(cam.crop(z));
  EXPECT_TRUE((cam.pad(cam.crop(once)) == once).all());
  EXPECT_EQ((once != 0.0).count(), 16 * 14);
}

TEST(Geometry, CropIsCenteredOnConvolutionSupport) {
  const auto g = SensorGeometry::centered({240, 320}, {240, 320});
  EXPECT_EQ(g.padded, (Size2{479, 639}));
  EXPECT_EQ(g.sensor, (Size2{240, 320}));
  EXPECT_EQ(g.crop_row, 119);
  EXPECT_EQ(g.crop_col, 159);
  const auto h = SensorGeometry::centered({10, 10}, {4, 4}, {6, 6});
  EXPECT_EQ(h.crop_row, (13 - 6) / 2);
}

TEST(Psf, UniformFourByFourFileNormalizes) {
  const auto dir = temp_dir("uniform");
  write_image(dir / "k.png", Plane::Constant(4, 4, 200.0 / 255.0), PixelFormat::png8);
  const auto psf = load_psf(dir / "k.png");
  ASSERT_EQ(psf.size(), (Size2{4, 4}));
  for (Eigen::Index i = 0; i < psf.grid.size(); ++i) EXPECT_DOUBLE_EQ(psf.grid.data()[i], 1.0 / 16.0);
}

TEST(Psf, NegativePixelIsNonPhysical) {
  const auto dir = temp_dir("negative");
  Plane k = Plane::Constant(5, 5, 0.2);
  k(2, 3) = -0.01;
  write_image(dir / "k.tiff", k, PixelFormat::tiff32f);
  try {
    load_psf(dir / "k.tiff");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-physical PSF"), std::string::npos);
  }
}

TEST(Psf, MissingCorruptAndZeroFilesFail) {
  const auto dir = temp_dir("bad");
  EXPECT_THROW(load_psf(dir / "absent.tiff"), Error);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(load_psf(dir / "junk.png"), Error);
  write_image(dir / "zero.tiff", Plane::Zero(3, 3), PixelFormat::tiff32f);
  EXPECT_THROW(load_psf(dir / "zero.tiff"), Error);
}

TEST(Psf, FitsGeometryAndRoundTripsWithSidecar) {
  const auto dir = temp_dir("roundtrip");
  const auto psf = synthesize_caustic_psf({12, 16}, 3);
  save_psf(dir / "c.tiff", psf);
  const auto back = load_psf(dir / "c.tiff", SensorGeometry::centered({20, 20}, {12, 16}));
  EXPECT_EQ(back.name, psf.name);
  EXPECT_LT((back.grid - psf.grid).abs().maxCoeff(), 1e-6);
  EXPECT_THROW(load_psf(dir / "c.tiff", SensorGeometry::centered({10, 10}, {3, 3})), Error);
}

TEST(Psf, CausticSumWithExtendedPrecision) {
  const auto psf = synthesize_caustic_psf({240, 320}, 2024);
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < psf.grid.size(); ++i) total += psf.grid.data()[i];
  EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-6);
  EXPECT_GE(psf.grid.minCoeff(), 0.0);
  const auto again = synthesize_caustic_psf({240, 320}, 2024);
  EXPECT_TRUE((again.grid == psf.grid).all());
}

TEST(Noise, SigmaZeroIffNone) {
  EXPECT_NO_THROW(NoiseSpec::none().validate());
  EXPECT_NO_THROW(NoiseSpec::gaussian(0.1, 1).validate());
  EXPECT_THROW(NoiseSpec::gaussian(0.0, 1).validate(), Error);
  NoiseSpec bad;
  bad.sigma = 0.1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(SimulateVideo, ZeroFramesStayZero) {
  VideoClip clip;
  for (int i = 0; i < kClipLength; ++i) clip.frames.push_back(Plane::Zero(12, 16));
  const auto raw = simulate_video(clip, gaussian_psf({3, 3}, 1.0));
  ASSERT_EQ(raw.length(), kClipLength);
  EXPECT_EQ(raw.kind, ClipKind::raw);
  for (const Plane& f : raw.frames) EXPECT_EQ(f.abs().maxCoeff(), 0.0);
}

TEST(SimulateVideo, FrameWiseEqualityAtFullResolution) {
  Rng rng(13);
  VideoClip clip;
  for (int i = 0; i < kClipLength; ++i) clip.frames.push_back(oracle::random_plane(240, 320, rng));
  clip.label = 7;
  const auto psf = synthesize_caustic_psf({60, 80}, 5);
  const LenslessCamera cam(SensorGeometry::centered({240, 320}, psf.size()), psf);
  const NoiseSpec noise = NoiseSpec::gaussian(0.01, 42);
  const auto raw = simulate_video(clip, cam, noise);
  ASSERT_EQ(raw.length(), kClipLength);
  EXPECT_EQ(raw.label, clip.label);
  for (int i = 0; i < kClipLength; ++i) {
    EXPECT_EQ(size_of(raw.frames[i]), (Size2{240, 320}));
    NoiseSpec frame_noise = noise;
    frame_noise.seed = derive_seed(noise.seed, static_cast<std::uint64_t>(i));
    const auto single = forward_measure(clip.frames[i], cam, frame_noise);
    EXPECT_TRUE((single.pixels == raw.frames[i]).all()) << "frame " << i;
  }
  EXPECT_FALSE((raw.frames[0] == raw.frames[1]).all());
}
