#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lfdnet/gbdt.hpp"
#include "lfdnet/layers.hpp"
#include "lfdnet/network.hpp"
#include "lfdnet/render.hpp"
#include "lfdnet/synth.hpp"

using namespace lfdnet;

namespace {

Tensor<float> noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<float> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<float>(uniform_real(rng) - 0.5);
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto layer = nn::ConvLayer<float>::make(c, c, 3, 1);
  const auto x = noise({20, c, hw, hw}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, layer));
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 64})->Args({64, 32})->Args({128, 16})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const std::size_t c = 32, hw = 64;
  const auto layer = nn::ConvLayer<float>::make(c, c, 3, 1);
  const auto x = noise({20, c, hw, hw}, 2);
  const auto g = noise({20, c, hw, hw}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, layer, g));
}
BENCHMARK(BM_Conv3x3Backward)->Unit(benchmark::kMillisecond);

void BM_Rasterize(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::vector<Triangle2> tris;
  for (int i = 0; i < 500; ++i) {
    Triangle2 t;
    for (auto& p : t) p = {uniform_real(rng) * res, uniform_real(rng) * res};
    tris.push_back(t);
  }
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_triangles(tris, res));
}
BENCHMARK(BM_Rasterize)->Arg(64)->Arg(256);

void BM_RenderViews(benchmark::State& state) {
  const auto& f = synth::family("gear");
  const auto mesh = normalize(synth::generate(f.name, synth::default_params(f)));
  const auto rig = dodecahedron_rig();
  RenderConfig cfg;
  cfg.resolution = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(render_views(mesh, rig, cfg));
}
BENCHMARK(BM_RenderViews)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_NetworkPredict(benchmark::State& state) {
  ArchSpec spec;
  spec.input_size = 128;
  spec.stem_filters = 16;
  spec.group_filters = {16, 32, 64};
  spec.group_downsample = {false, true, true};
  spec.blocks_per_group = 2;
  spec.fc = {128};
  spec.classes = 8;
  const Network net(spec, 1);
  const auto x = noise({20, 1, 128, 128}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_NetworkPredict)->Unit(benchmark::kMillisecond);

void BM_GbdtFit(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), k = 8, width = k + 20;
  std::mt19937_64 rng(6);
  std::vector<double> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < rows; ++i) {
    const int label = static_cast<int>(i % k);
    std::vector<double> p(k);
    double s = 0;
    for (auto& v : p) s += (v = uniform_real(rng));
    p[static_cast<std::size_t>(label)] += s;
    s *= 2;
    for (auto& v : p) v /= s;
    const auto f = gbdt::view_feature(p, static_cast<int>(i % 20), false);
    x.insert(x.end(), f.begin(), f.end());
    y.push_back(label);
  }
  gbdt::Config cfg;
  cfg.rounds = 10;
  for (auto _ : state) benchmark::DoNotOptimize(gbdt::fit(x, width, y, k, cfg));
}
BENCHMARK(BM_GbdtFit)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
