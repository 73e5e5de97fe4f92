#include <benchmark/benchmark.h>

#include <random>

#include "magniflow/dmm/model.hpp"
#include "magniflow/flow/ops.hpp"
#include "magniflow/flow/pyrlk.hpp"
#include "magniflow/fvs/model.hpp"
#include "magniflow/nn/ops.hpp"

using namespace magniflow;

namespace {

std::vector<nn::Real> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<nn::Real> v(n);
  for (auto& x : v) x = static_cast<nn::Real>(d(rng));
  return v;
}

ImageBuffer texture(int w, int h, double shift) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.set(x, y, c, static_cast<float>(0.5 + 0.2 * std::sin(0.3 * (x - shift) + c) * std::cos(0.23 * y)));
  return img;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const auto x = nn::Tensor::from({1, c, s, s}, noise(static_cast<std::size_t>(c) * s * s, 1));
  const auto w = nn::Tensor::from({c, c, 3, 3}, noise(static_cast<std::size_t>(c) * c * 9, 2));
  nn::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, nn::Tensor(), 1, 1));
}
BENCHMARK(BM_Conv2d)->Args({32, 16})->Args({64, 32})->Args({16, 128});

void BM_WarpBackward(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const auto img = texture(s, s, 0.0);
  const auto flow = FlowField::constant(s, s, 1.3f, -0.7f);
  for (auto _ : state) benchmark::DoNotOptimize(warp_backward(img, flow));
}
BENCHMARK(BM_WarpBackward)->Arg(64)->Arg(256);

void BM_PyrLk(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const auto a = texture(s, s, 0.0), b = texture(s, s, 1.5);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_flow_pyrlk(a, b));
}
BENCHMARK(BM_PyrLk)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DenoiserForward(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  dmm::DmmConfig cfg;
  cfg.widths = {32, 32, 64};
  dmm::MagnifierModel model(cfg, 1);
  const auto x = nn::Tensor::from({1, 2, s, s}, noise(2 * static_cast<std::size_t>(s) * s, 3));
  const auto cond = nn::Tensor::from({1, 2, s, s}, noise(2 * static_cast<std::size_t>(s) * s, 4));
  nn::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, cond, {10.0}, {100}));
}
BENCHMARK(BM_DenoiserForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Synthesis(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  fvs::SynthesisModel model(fvs::FvsConfig{}, 1);
  const auto img = texture(s, s, 0.0);
  const auto flow = FlowField::constant(s, s, 2.0f, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(fvs::synthesize_frame(model, img, flow));
}
BENCHMARK(BM_Synthesis)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
