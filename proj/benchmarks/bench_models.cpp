#include "lgr/models.hpp"
#include "lgr/nn/layers.hpp"
#include "lgr/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

lgr::nn::Tensor random_tensor(const lgr::nn::Shape& shape, std::uint64_t seed) {
  lgr::Rng rng(seed);
  lgr::nn::Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform01();
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  lgr::Rng rng(1);
  const int c = static_cast<int>(state.range(0));
  lgr::nn::Conv3d conv("conv", c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  const auto x = random_tensor({2, c, 8, 32, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, false));
}
BENCHMARK(BM_Conv3dForward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  lgr::Rng rng(1);
  const int c = static_cast<int>(state.range(0));
  lgr::nn::Conv3d conv("conv", c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, rng);
  const auto x = random_tensor({2, c, 8, 32, 32}, 2);
  const auto g = random_tensor(conv.output_shape(x.shape()), 3);
  for (auto _ : state) {
    conv.forward(x, true);
    benchmark::DoNotOptimize(conv.backward(g));
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ClassifierForward(benchmark::State& state) {
  const auto kind = state.range(0) == 0 ? lgr::models::ModelKind::resnet3d : lgr::models::ModelKind::raw3dnet;
  const auto spec = lgr::models::ModelSpec::reduced(kind, 48, 64);
  auto model = lgr::models::build_model(spec, 7);
  const auto x = random_tensor(spec.input_shape(2), 8);
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x, false));
  state.SetLabel(lgr::models::to_string(kind));
}
BENCHMARK(BM_ClassifierForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
