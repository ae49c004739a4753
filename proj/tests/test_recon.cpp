#include "lgr/recon.hpp"

#include "lgr/error.hpp"
#include "oracles.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <limits>

using namespace lgr;
using lgr::optics::LenslessCamera;
using lgr::optics::SensorGeometry;

namespace {

LenslessCamera make_camera(Size2 scene, const optics::PointSpreadFunction& psf) {
  return LenslessCamera(SensorGeometry::centered(scene, psf.size()), psf);
}

// Dense matrix of circular convolution with the PSF embedded top-left of an
// h x w plane, acting on row-major vectorized planes.
Eigen::MatrixXd dense_circular_conv(const Plane& psf, int h, int w) {
  const int n = h * w;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int i = 0; i < psf.rows(); ++i)
        for (int j = 0; j < psf.cols(); ++j) {
          const int orow = (r + i) % h, ocol = (c + j) % w;
          m(orow * w + ocol, r * w + c) += psf(i, j);
        }
  return m;
}

// Dense circular forward-difference operators along columns (dx) and rows (dy).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> dense_differences(int h, int w) {
  const int n = h * w;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, n), dy = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      dx(i, i) -= 1.0;
      dx(i, r * w + (c + 1) % w) += 1.0;
      dy(i, i) -= 1.0;
      dy(i, ((r + 1) % h) * w + c) += 1.0;
    }
  return {dx, dy};
}

Eigen::VectorXd vec(const Plane& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
}

}  // namespace

TEST(Admm, BlobBenchmarkReachesThirtyDb) {
  const Plane scene = oracle::blob_scene(64, 64);
  const auto psf = optics::gaussian_psf({9, 9}, 2.0);
  const auto cam = make_camera({64, 64}, psf);
  const auto b = optics::forward_measure(scene, cam);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = recon::admm_reconstruct(b, cam, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double quality = psnr(result.scene, scene);
  std::printf("psnr %.2f dB iters %zu primal %.3g dual %.3g (%.2fs)\n", quality, result.history.size(),
              result.history.back().primal, result.history.back().dual, secs);
  EXPECT_GE(quality, 30.0);
  EXPECT_TRUE(result.converged);
  EXPECT_LE(static_cast<int>(result.history.size()), 200);
  EXPECT_LT(result.history.back().primal, 1e-3);
  EXPECT_LT(result.history.back().dual, 1e-3);
  EXPECT_LT(secs, 120.0);
}

TEST(Admm, DeltaPsfRecoversMeasurement) {
  Rng rng(11);
  const Plane scene = oracle::random_plane(16, 20, rng, 0.1, 0.9);
  const auto cam = make_camera({16, 20}, optics::delta_psf({3, 3}));
  const auto b = optics::forward_measure(scene, cam);
  ASSERT_LT((b.pixels - scene).abs().maxCoeff(), 1e-12);
  recon::AdmmParams params;
  params.tv_weight = 0.0;
  params.max_iters = 50;
  params.primal_tol = params.dual_tol = 1e-7;
  const auto result = recon::admm_reconstruct(b, cam, params);
  EXPECT_LE(static_cast<int>(result.history.size()), 50);
  EXPECT_LT((result.scene - b.pixels).abs().maxCoeff(), 1e-4);
}

TEST(Admm, ZeroMeasurementGivesZero) {
  const auto cam = make_camera({12, 12}, optics::gaussian_psf({5, 5}, 1.0));
  const auto result = recon::admm_reconstruct({Plane::Zero(12, 12), false}, cam, {});
  EXPECT_EQ(result.scene.abs().maxCoeff(), 0.0);
  EXPECT_EQ(result.estimate.abs().maxCoeff(), 0.0);
}

TEST(Admm, XUpdateMatchesDenseSolve) {
  Rng rng(5);
  for (const auto& [scene, psf_size] : {std::pair{Size2{6, 7}, Size2{3, 4}}, std::pair{Size2{8, 8}, Size2{5, 5}},
                                        std::pair{Size2{5, 9}, Size2{4, 2}}}) {
    const auto psf = optics::make_psf(oracle::random_plane(psf_size.height, psf_size.width, rng), "random");
    const auto cam = make_camera(scene, psf);
    const Size2 p = cam.geometry().padded;
    ASSERT_LE(p.height, 12);
    ASSERT_LE(p.width, 12);
    recon::AdmmParams params;
    params.rho_data = 0.7;
    params.rho_tv = 0.3;
    params.rho_nonneg = 0.05;
    const recon::AdmmSolver solver(cam, params);

    const Eigen::MatrixXd H = dense_circular_conv(psf.grid, p.height, p.width);
    const auto [Dx, Dy] = dense_differences(p.height, p.width);
    const int n = p.height * p.width;
    const Eigen::MatrixXd M = params.rho_data * H.transpose() * H +
                              params.rho_tv * (Dx.transpose() * Dx + Dy.transpose() * Dy) +
                              params.rho_nonneg * Eigen::MatrixXd::Identity(n, n);
    const Plane rhs = oracle::random_plane(p.height, p.width, rng, -1.0, 1.0);
    const Eigen::VectorXd expected = M.ldlt().solve(vec(rhs));
    const Plane got = solver.x_update(rhs);
    EXPECT_LT((vec(got) - expected).cwiseAbs().maxCoeff(), 1e-6);

    const auto [gx, gy] = recon::AdmmSolver::gradient(rhs);
    EXPECT_LT((vec(gx) - Dx * vec(rhs)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((vec(gy) - Dy * vec(rhs)).cwiseAbs().maxCoeff(), 1e-12);
    const Plane adj = recon::AdmmSolver::gradient_adjoint(gx, gy);
    EXPECT_LT((vec(adj) - (Dx.transpose() * vec(gx) + Dy.transpose() * vec(gy))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Admm, SoftThresholdElementwise) {
  Rng rng(8);
  const Plane v = oracle::random_plane(9, 13, rng, -2.0, 2.0);
  for (double tau : {0.0, 0.1, 0.75, 3.0}) {
    const Plane out = recon::AdmmSolver::soft_threshold(v, tau);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double x = v.data()[i];
      const double expected = (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0)) * std::max(std::abs(x) - tau, 0.0);
      EXPECT_DOUBLE_EQ(out.data()[i], expected);
    }
  }
}

TEST(Admm, EstimateIsNonNegativeBeforeClamp) {
  Rng rng(21);
  const auto psf = optics::synthesize_caustic_psf({7, 7}, 4);
  const auto cam = make_camera({24, 24}, psf);
  const Plane scene = oracle::random_plane(24, 24, rng);
  const auto b = optics::forward_measure(scene, cam, optics::NoiseSpec::gaussian(0.05, 3));
  recon::AdmmParams params;
  params.max_iters = 40;
  const auto result = recon::admm_reconstruct(b, cam, params);
  EXPECT_GE(result.estimate.minCoeff(), -1e-9);
  EXPECT_GE(result.scene.minCoeff(), 0.0);
  EXPECT_LE(result.scene.maxCoeff(), 1.0);
  EXPECT_EQ(result.scene.rows(), 24);
  for (std::size_t i = 0; i < result.history.size(); ++i) EXPECT_EQ(result.history[i].iter, static_cast<int>(i) + 1);
}

TEST(Admm, RejectsUnnormalizedPsfAndBadParams) {
  optics::PointSpreadFunction psf{Plane::Constant(3, 3, 0.5), "unnormalized"};
  const LenslessCamera cam(SensorGeometry::centered({8, 8}, {3, 3}), psf);
  EXPECT_THROW(recon::AdmmSolver(cam, {}), Error);

  const auto good = make_camera({8, 8}, optics::delta_psf({3, 3}));
  recon::AdmmParams bad;
  bad.rho_tv = 0.0;
  EXPECT_THROW(recon::AdmmSolver(good, bad), Error);
  bad = {};
  bad.dual_tol = -1.0;
  EXPECT_THROW(recon::AdmmSolver(good, bad), Error);
  bad = {};
  bad.tv_weight = -0.1;
  EXPECT_THROW(recon::AdmmSolver(good, bad), Error);
}

TEST(Objective, TrueSceneWithoutTvIsZero) {
  Rng rng(2);
  const Plane scene = oracle::random_plane(20, 18, rng);
  const auto cam = make_camera({20, 18}, optics::gaussian_psf({5, 5}, 1.2));
  const auto b = optics::forward_measure(scene, cam);
  recon::AdmmParams params;
  params.tv_weight = 0.0;
  EXPECT_NEAR(recon::objective_value(scene, b.pixels, cam, params), 0.0, 1e-9);
}

TEST(Objective, TwoByTwoConstantByHand) {
  // Uniform 2x2 PSF, 2x2 scene of constant c, 2x2 sensor. The full linear
  // convolution is [[c/4, c/2, c/4], [c/2, c, c/2], [c/4, c/2, c/4]] and the
  // centered crop starts at (0, 0): [[c/4, c/2], [c/2, c]]. Against b = c the
  // residuals are -3c/4, -c/2, -c/2, 0, so the data term is 17 c^2 / 32.
  const auto psf = optics::make_psf(Plane::Ones(2, 2), "box");
  const auto cam = make_camera({2, 2}, psf);
  recon::AdmmParams params;
  params.tv_weight = 0.0;
  for (double c : {0.2, 0.5, 1.0}) {
    const Plane x = Plane::Constant(2, 2, c);
    const Plane b = Plane::Constant(2, 2, c);
    EXPECT_NEAR(recon::objective_value(x, b, cam, params), 17.0 * c * c / 32.0, 1e-12);
  }
  // A consistent measurement leaves only the TV term. With circular
  // differences on the 3x3 padded plane, the embedded 2x2 constant block has
  // 4 jumps of size c along each axis.
  const double c = 0.5;
  const Plane x = Plane::Constant(2, 2, c);
  params.tv_weight = 0.1;
  const Plane b = cam.apply(x);
  EXPECT_NEAR(recon::objective_value(x, b, cam, params), 0.1 * 8 * c, 1e-12);
}

TEST(Objective, NegativeEntryIsInfinite) {
  const auto cam = make_camera({4, 4}, optics::delta_psf({1, 1}));
  Plane x = Plane::Constant(4, 4, 0.3);
  x(2, 1) = -1e-6;
  EXPECT_EQ(recon::objective_value(x, Plane::Zero(4, 4), cam, {}), std::numeric_limits<double>::infinity());
  x(2, 1) = -1e-10;
  EXPECT_TRUE(std::isfinite(recon::objective_value(x, Plane::Zero(4, 4), cam, {})));
}

TEST(ReconstructClip, MatchesFrameWiseCalls) {
  Rng rng(31);
  const auto cam = make_camera({16, 16}, optics::gaussian_psf({5, 5}, 1.0));
  VideoClip scene;
  for (int i = 0; i < kClipLength; ++i) scene.frames.push_back(oracle::random_plane(16, 16, rng));
  scene.label = 4;
  const VideoClip raw = optics::simulate_video(scene, cam);
  recon::AdmmParams params;
  params.max_iters = 30;
  std::vector<std::vector<recon::ResidualRecord>> histories;
  const VideoClip out = recon::reconstruct_clip(raw, cam, params, &histories);
  EXPECT_EQ(out.kind, ClipKind::reconstructed);
  EXPECT_EQ(out.length(), kClipLength);
  EXPECT_EQ(out.label, scene.label);
  ASSERT_EQ(histories.size(), static_cast<std::size_t>(kClipLength));
  for (int i = 0; i < kClipLength; ++i) {
    const auto single = recon::admm_reconstruct({raw.frames[i], false}, cam, params);
    EXPECT_EQ(size_of(out.frames[i]), (Size2{16, 16}));
    EXPECT_TRUE((out.frames[i] == single.scene).all()) << "frame " << i;
    EXPECT_EQ(histories[i].size(), single.history.size());
  }
  validate_clip(out);
}
