#include "lgr/fft.hpp"
#include "lgr/optics.hpp"
#include "lgr/recon.hpp"
#include "lgr/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

lgr::Plane random_plane(lgr::Size2 s, std::uint64_t seed) {
  lgr::Rng rng(seed);
  lgr::Plane p(s.height, s.width);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform01();
  return p;
}

// Centered crop of the full linear convolution, computed by direct summation.
lgr::Plane direct_forward(const lgr::Plane& scene, const lgr::Plane& psf, const lgr::optics::SensorGeometry& g) {
  lgr::Plane out = lgr::Plane::Zero(g.sensor.height, g.sensor.width);
  for (int r = 0; r < g.sensor.height; ++r)
    for (int c = 0; c < g.sensor.width; ++c) {
      const int y = r + g.crop_row, x = c + g.crop_col;
      double acc = 0.0;
      for (int i = 0; i < psf.rows(); ++i) {
        const int sy = y - i;
        if (sy < 0 || sy >= scene.rows()) continue;
        for (int j = 0; j < psf.cols(); ++j) {
          const int sx = x - j;
          if (sx >= 0 && sx < scene.cols()) acc += psf(i, j) * scene(sy, sx);
        }
      }
      out(r, c) = acc;
    }
  return out;
}

void BM_ForwardFft(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const lgr::Size2 scene{3 * n / 4, n};
  const auto psf = lgr::optics::synthesize_caustic_psf({15, 15}, 1);
  const lgr::optics::LenslessCamera camera(lgr::optics::SensorGeometry::centered(scene, psf.size()), psf);
  const auto x = random_plane(scene, 2);
  for (auto _ : state) benchmark::DoNotOptimize(camera.apply(x));
}
BENCHMARK(BM_ForwardFft)->Arg(64)->Arg(128)->Arg(320);

void BM_ForwardDirect(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const lgr::Size2 scene{3 * n / 4, n};
  const auto psf = lgr::optics::synthesize_caustic_psf({15, 15}, 1);
  const auto g = lgr::optics::SensorGeometry::centered(scene, psf.size());
  const auto x = random_plane(scene, 2);
  for (auto _ : state) benchmark::DoNotOptimize(direct_forward(x, psf.grid, g));
}
BENCHMARK(BM_ForwardDirect)->Arg(64)->Arg(128)->Arg(320);

void BM_FftRoundTrip(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const lgr::Fft2d fft(n, n);
  const auto x = random_plane({n, n}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fft.inverse(fft.forward(x)));
}
BENCHMARK(BM_FftRoundTrip)->Arg(128)->Arg(512);

void BM_AdmmIterations(benchmark::State& state) {
  const lgr::Size2 scene{60, 80};
  const auto psf = lgr::optics::synthesize_caustic_psf(scene, 4);
  const lgr::optics::LenslessCamera camera(lgr::optics::SensorGeometry::centered(scene, psf.size()), psf);
  const auto b = lgr::optics::forward_measure(random_plane(scene, 5), camera);
  lgr::recon::AdmmParams params;
  params.max_iters = static_cast<int>(state.range(0));
  params.primal_tol = params.dual_tol = 1e-12;
  for (auto _ : state) benchmark::DoNotOptimize(lgr::recon::admm_reconstruct(b, camera, params));
  state.SetItemsProcessed(state.iterations() * params.max_iters);
}
BENCHMARK(BM_AdmmIterations)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
