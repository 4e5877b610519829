#include <benchmark/benchmark.h>

#include "dtlab/cka.hpp"
#include "dtlab/mine.hpp"

using namespace dtlab;

namespace {

Matrix randn(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

}  // namespace

static void BM_UnbiasedLinearCka(benchmark::State& state) {
  Rng rng(1);
  const Matrix x = randn(state.range(0), 64, rng);
  const Matrix y = randn(state.range(0), 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(unbiased_linear_cka(x, y));
}
BENCHMARK(BM_UnbiasedLinearCka)->Arg(100)->Arg(500)->Unit(benchmark::kMicrosecond);

static void BM_MineEstimateSmall(benchmark::State& state) {
  Rng rng(2);
  const Matrix x = randn(100, 4, rng);
  Matrix y = x;
  for (Index i = 0; i < y.size(); ++i) y.data()[i] += 0.5 * rng.gaussian();
  MineConfig cfg;
  cfg.hidden_width = 128;
  cfg.iterations = 100;
  cfg.learning_rate = 1e-3;
  for (auto _ : state) {
    Rng erng(3);
    benchmark::DoNotOptimize(mine_estimate(x, y, cfg, erng).value);
  }
}
BENCHMARK(BM_MineEstimateSmall)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
