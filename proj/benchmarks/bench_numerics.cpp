#include <benchmark/benchmark.h>

#include "feta/mlp.hpp"
#include "feta/numeric.hpp"
#include "feta/rng.hpp"

using namespace feta;

static void BM_GaussianVector(benchmark::State& state) {
  SeededRng rng(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(gaussian_vector(rng, static_cast<std::size_t>(state.range(0)), 1.0));
}
BENCHMARK(BM_GaussianVector)->Arg(64)->Arg(4096);

static void BM_MlpForward(benchmark::State& state) {
  SeededRng rng(1);
  Mlp net = make_mlp({88, 128, 128, 64}, OutputActivation::kIdentity, rng);
  const Vec x = gaussian_vector(rng, 88, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(net, x));
}
BENCHMARK(BM_MlpForward);

static void BM_MlpBackward(benchmark::State& state) {
  SeededRng rng(1);
  Mlp net = make_mlp({88, 128, 128, 64}, OutputActivation::kIdentity, rng);
  const Vec x = gaussian_vector(rng, 88, 1.0);
  const Vec g = gaussian_vector(rng, 64, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_backward(net, x, g));
}
BENCHMARK(BM_MlpBackward);
