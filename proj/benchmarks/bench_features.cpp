#include <benchmark/benchmark.h>

#include "feta/features.hpp"
#include "feta/numeric.hpp"
#include "feta/rng.hpp"

using namespace feta;

static void BM_RffEmbed(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const RffProjection proj = sample_projection(3, k, 64);
  SeededRng rng(4);
  const Vec h = gaussian_vector(rng, 64, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rff_embed(h, proj));
}
BENCHMARK(BM_RffEmbed)->Arg(128)->Arg(10000);

static void BM_CentralImageQuery(benchmark::State& state) {
  SeededRng rng(5);
  std::vector<Vec> images;
  for (int i = 0; i < 500; ++i) images.push_back(gaussian_vector(rng, 64, 0.3));
  for (auto _ : state)
    benchmark::DoNotOptimize(central_image_query(images, 0.2, 4.0, 3.0, images.size(), rng));
}
BENCHMARK(BM_CentralImageQuery);
