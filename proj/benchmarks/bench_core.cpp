#include <benchmark/benchmark.h>

#include "dora/data.hpp"
#include "dora/encoder.hpp"
#include "dora/trainer.hpp"
#include "dora/transport.hpp"

using namespace dora;

namespace {

static void BM_Sinkhorn(benchmark::State& state) {
  Rng rng(1);
  const int64_t k = state.range(0), n = state.range(1);
  Tensor<float> scores({k, n});
  for (auto& v : scores.data) v = static_cast<float>(rng.normal());
  SinkhornConfig cfg;
  for (auto _ : state) {
    auto plan = sinkhorn(scores, cfg);
    benchmark::DoNotOptimize(plan.M.data.data());
  }
}
BENCHMARK(BM_Sinkhorn)->Args({3, 64})->Args({8, 64});

static void BM_Encode(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.dim = 48;
  cfg.heads = 6;
  cfg.heads_last = 6;
  cfg.depth = static_cast<int>(state.range(0));
  cfg.patch = 8;
  cfg.resolutions = {64};
  auto params = init_encoder<float>(cfg, Rng(2));
  auto clip = gen_synthetic_clip<float>(3, 64, 1, 3);
  for (auto _ : state) {
    auto out = encode(params, clip.frames[0]);
    benchmark::DoNotOptimize(out.z.data.data());
  }
}
BENCHMARK(BM_Encode)->Arg(2)->Arg(3);

static void BM_TrackClip(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.dim = 48;
  cfg.heads = 6;
  cfg.heads_last = 6;
  cfg.depth = 2;
  cfg.patch = 8;
  cfg.resolutions = {64};
  auto params = init_encoder<float>(cfg, Rng(4));
  auto clip = gen_synthetic_clip<float>(3, 64, 4, 5);
  for (auto _ : state) {
    auto res = track_clip(params, clip.frames, 3, 7, {});
    benchmark::DoNotOptimize(res.refined_maps.data());
  }
}
BENCHMARK(BM_TrackClip);

static void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.dim = 48;
  cfg.heads = 6;
  cfg.heads_last = 6;
  cfg.depth = static_cast<int>(state.range(0));
  cfg.patch = 8;
  cfg.crop_size = 64;
  cfg.global_size = 64;
  cfg.local_size = 32;
  cfg.n_local = 2;
  cfg.k_objects = 3;
  cfg.clip_frames = 4;
  cfg.batch_clips = 1;
  cfg.head_out_dim = 64;
  cfg.warmup_steps = 5;
  cfg.total_steps = 1000000;
  auto sampler = [](uint64_t seed) {
    Rng rng(seed);
    auto clip = gen_synthetic_clip<float>(3, 64, 4, 100 + rng.uniform_int(4));
    return clip.frames;
  };
  Trainer trainer(cfg, sampler);
  for (auto _ : state) {
    auto metrics = trainer.step();
    benchmark::DoNotOptimize(metrics.loss_total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
