#include <benchmark/benchmark.h>

#include "feta/accountant.hpp"

using namespace feta;

static void BM_SgmRdpStep(benchmark::State& state) {
  const int alpha = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(sgm_rdp_step(0.074, 15.0, alpha));
}
BENCHMARK(BM_SgmRdpStep)->Arg(8)->Arg(64)->Arg(256);

static void BM_ComposeDefaultGrid(benchmark::State& state) {
  const RdpLedger zero = RdpLedger::zero();
  const SgmSpec spec{0.074, 15.0, static_cast<std::uint64_t>(state.range(0)), "dpsgd"};
  for (auto _ : state) benchmark::DoNotOptimize(compose(zero, spec));
}
BENCHMARK(BM_ComposeDefaultGrid)->Arg(1)->Arg(2027);

static void BM_CalibrateSigmaD(benchmark::State& state) {
  const std::vector<SgmSpec> fixed{{0.11, 20.0, 50, "spatial"}, {1.0, 26.0, 1, "frequency"}};
  for (auto _ : state)
    benchmark::DoNotOptimize(calibrate_sigma_d(1.0, 1.7e-6, fixed, 0.074, 2027));
}
BENCHMARK(BM_CalibrateSigmaD);
