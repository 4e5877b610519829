#include <benchmark/benchmark.h>

#include "dtlab/transformer.hpp"

using namespace dtlab;

namespace {

struct DeskFixture {
  ModelConfig cfg = ModelConfig::desk(4, 2);
  Checkpoint ckpt;
  TrajectoryBatch batch;

  DeskFixture() {
    cfg.dropout_attn = 0.0;
    cfg.dropout_resid = 0.0;
    Rng irng(1);
    ckpt = Checkpoint::init_random(cfg, irng);
    Rng brng(2);
    batch.batch_size = 64;
    batch.K = cfg.context_K;
    batch.state_dim = cfg.state_dim;
    batch.action_dim = cfg.action_dim;
    batch.rtg = Matrix::Zero(64, batch.K);
    batch.states = Matrix::Zero(64, static_cast<Index>(batch.K) * 4);
    batch.actions = Matrix::Zero(64, static_cast<Index>(batch.K) * 2);
    batch.timesteps = Matrix::Zero(64, batch.K);
    batch.attention_mask = Matrix::Ones(64, batch.K);
    for (int s = 0; s < 64; ++s)
      for (int k = 0; k < batch.K; ++k) {
        batch.rtg(s, k) = brng.gaussian();
        for (int i = 0; i < 4; ++i)
          batch.states(s, static_cast<Index>(k) * 4 + i) = brng.gaussian();
        for (int i = 0; i < 2; ++i)
          batch.actions(s, static_cast<Index>(k) * 2 + i) = 0.3 * brng.gaussian();
        batch.timesteps(s, k) = k;
      }
  }
};

}  // namespace

static void BM_DtForwardEval(benchmark::State& state) {
  DeskFixture f;
  Rng dummy(0);
  for (auto _ : state) {
    const ForwardResult r = dt_forward(f.batch, f.ckpt, RunMode::kEval, dummy);
    benchmark::DoNotOptimize(r.actions.sum());
  }
}
BENCHMARK(BM_DtForwardEval)->Unit(benchmark::kMillisecond);

static void BM_DtLossAndGrads(benchmark::State& state) {
  DeskFixture f;
  Rng dummy(0);
  for (auto _ : state) {
    const LossResult r = dt_loss_and_grads(f.batch, f.ckpt, dummy, RunMode::kEval);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_DtLossAndGrads)->Unit(benchmark::kMillisecond);

static void BM_DtForwardWithCapture(benchmark::State& state) {
  DeskFixture f;
  Rng dummy(0);
  CaptureOptions cap;
  cap.activations = true;
  cap.attention = true;
  for (auto _ : state) {
    const ForwardResult r = dt_forward(f.batch, f.ckpt, RunMode::kEval, dummy, cap);
    benchmark::DoNotOptimize(r.captures.size());
  }
}
BENCHMARK(BM_DtForwardWithCapture)->Unit(benchmark::kMillisecond);
