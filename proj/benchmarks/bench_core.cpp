#include <benchmark/benchmark.h>

#include <random>

#include "bldgnet/datapipe.hpp"
#include "bldgnet/labels.hpp"
#include "bldgnet/layers.hpp"
#include "bldgnet/netgraph.hpp"
#include "bldgnet/upsample.hpp"

using namespace bldg;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

NetworkSpec reduced_network() { return scaled_network({8, 12, 16, 24, 16, 12, 12}); }

template <typename T>
void BM_Conv2d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  const auto k = static_cast<std::size_t>(state.range(3));
  const Tensor<T> x = random_tensor<T>({hw, hw, cin}, 1);
  const ConvParams<T> p{random_tensor<T>({cout, k, k, cin}, 2), random_tensor<T>({cout}, 3),
                        Padding::same_zero};
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hw * hw * cout * k * k * cin));
}
BENCHMARK(BM_Conv2d<double>)->Args({128, 50, 70, 5})->Args({64, 100, 150, 3})->Args({256, 290, 128, 1});
BENCHMARK(BM_Conv2d<float>)->Args({128, 50, 70, 5})->Args({64, 100, 150, 3})->Args({256, 290, 128, 1});

void BM_Conv2dVjp(benchmark::State& state) {
  const Tensor<double> x = random_tensor<double>({64, 64, 50}, 1);
  const ConvParams<double> p{random_tensor<double>({70, 5, 5, 50}, 2), random_tensor<double>({70}, 3),
                             Padding::same_zero};
  const Tensor<double> u = random_tensor<double>({64, 64, 70}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_vjp(x, p, u));
}
BENCHMARK(BM_Conv2dVjp);

void BM_Upsample(benchmark::State& state) {
  const int f = static_cast<int>(state.range(0));
  const Tensor<double> map = random_tensor<double>({256u / f, 256u / f, 70}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(upsample_bilinear(map, f));
}
BENCHMARK(BM_Upsample)->Arg(2)->Arg(4)->Arg(8);

void BM_SignedDistance(benchmark::State& state) {
  const SceneSample s = generate_scene(7, SceneConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(signed_distance_transform(s.mask));
}
BENCHMARK(BM_SignedDistance);

void BM_Rasterize(benchmark::State& state) {
  const SceneSample s = generate_scene(8, SceneConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(s.polygons, 256, 256, 0.5));
}
BENCHMARK(BM_Rasterize);

template <typename T>
void BM_TrainStep(benchmark::State& state) {
  const NetworkSpec spec = reduced_network();
  const ParamSet<T> p = init_params<T>(spec, 0);
  const auto hw = static_cast<std::size_t>(state.range(0));
  const Tensor<T> image = random_tensor<T>({hw, hw, 3}, 9);
  const ClassMap labels = ClassMap::map(hw / 2, hw / 2, 64);
  for (auto _ : state) {
    auto r = forward(spec, p, image, true, false);
    benchmark::DoNotOptimize(backward(spec, p, r.cache, labels));
  }
}
BENCHMARK(BM_TrainStep<double>)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep<float>)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_FullForward(benchmark::State& state) {
  const NetworkSpec spec = paper_network();
  const ParamSet<float> p = init_params<float>(spec, 0);
  const Tensor<float> image = random_tensor<float>({512, 512, 3}, 10);
  for (auto _ : state) benchmark::DoNotOptimize(forward(spec, p, image, false));
}
BENCHMARK(BM_FullForward)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
