#include <benchmark/benchmark.h>

#include <vector>

#include "rewardchain/bundle.hpp"
#include "rewardchain/finetune.hpp"
#include "rewardchain/inference.hpp"
#include "rewardchain/models.hpp"
#include "rewardchain/ops.hpp"
#include "rewardchain/params.hpp"
#include "rewardchain/rng.hpp"

namespace {

using namespace rc;

ModelBundle random_bundle() {
  ModelBundle b;
  const ModelDims dims;
  b.world = make_world(WorldConfig{}, 1);
  Rng rng(2);
  b.text = init_text_encoder(dims, rng);
  b.image = init_image_encoder(dims, rng);
  b.denoiser = init_denoiser(dims, rng);
  return b;
}

std::vector<Prompt> prompts_for(const ModelBundle& b, std::size_t n) {
  Rng rng(3);
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_prompt(b.world, rng));
  return out;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = Rng(4).normal_tensor({n, n}), w = Rng(5).normal_tensor({n, n});
  for (auto _ : state) {
    Tape tape;
    Var x = tape.leaf(a, true), y = tape.leaf(w, true);
    GradMap g = tape.backward(ops::sum_squares(ops::tanh(ops::matmul(x, y))));
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64);

void BM_DenoiserForward(benchmark::State& state) {
  const ModelBundle b = random_bundle();
  const NoiseSchedule s = make_schedule(1000, ScheduleKind::cosine);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor z = Rng(6).normal_tensor({batch, 16}), c = Rng(7).normal_tensor({batch, 8});
  for (auto _ : state) {
    Tape tape;
    VarMap den = bind_params(tape, b.denoiser, false);
    Var eps = denoise(den, tape.constant(z), 500, tape.constant(c), s);
    benchmark::DoNotOptimize(eps.value());
  }
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(32);

// One prompt-chain training step at N = 25; range(0) = K, range(1) = checkpointing.
void BM_ChainFinetuneStep(benchmark::State& state) {
  const ModelBundle b = random_bundle();
  const NoiseSchedule s = make_schedule(1000, ScheduleKind::cosine);
  TrainConfig c;
  c.k_steps = static_cast<int>(state.range(0));
  c.checkpointing = state.range(1) != 0;
  const StepPlan plan = make_step_plan(c.n_steps, s);
  const std::vector<Prompt> prompts = prompts_for(b, c.batch);
  const Tensor z_T = initial_noise(8, prompts.size(), 16);
  for (auto _ : state) benchmark::DoNotOptimize(chain_finetune_step(b, prompts, z_T, s, plan, c).loss);
}
BENCHMARK(BM_ChainFinetuneStep)->Args({1, 1})->Args({5, 0})->Args({5, 1})->Args({25, 0})->Args({25, 1})
    ->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  const ModelBundle b = random_bundle();
  SamplerConfig sc;
  sc.sampler = state.range(0) == 0 ? SamplerKind::ddim : SamplerKind::euler;
  const std::vector<Prompt> prompts = prompts_for(b, 32);
  const Tensor z_T = initial_noise(9, prompts.size(), 16);
  for (auto _ : state) benchmark::DoNotOptimize(sample_prompts(b, prompts, z_T, sc));
}
BENCHMARK(BM_Sample)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CheckpointRoundTrip(benchmark::State& state) {
  const ModelBundle b = random_bundle();
  for (auto _ : state) benchmark::DoNotOptimize(deserialize_params(serialize_params(b.denoiser)));
}
BENCHMARK(BM_CheckpointRoundTrip);

}  // namespace

BENCHMARK_MAIN();
