#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rewardchain/bundle.hpp"
#include "rewardchain/chain.hpp"
#include "rewardchain/finetune.hpp"
#include "rewardchain/models.hpp"
#include "rewardchain/ops.hpp"
#include "rewardchain/rewards.hpp"
#include "rewardchain/rng.hpp"
#include "rewardchain/world.hpp"

namespace rc::testing {

/// Randomly initialised bundle at the default toy sizes (D=16, C=8).
inline ModelBundle toy_bundle(std::uint64_t seed, const ModelDims& dims = {}) {
  ModelBundle b;
  WorldConfig wc;
  wc.data_dim = dims.data_dim;
  wc.vocab = dims.vocab;
  b.world = make_world(wc, seed);
  Rng rng(mix_seed(seed, 99));
  b.text = init_text_encoder(dims, rng);
  b.image = init_image_encoder(dims, rng);
  b.denoiser = init_denoiser(dims, rng);
  return b;
}

inline std::vector<Prompt> toy_prompts(const ToyWorld& world, std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_prompt(world, rng));
  return out;
}

/// Central differences over every element of every tensor.
inline std::vector<Tensor> central_differences(const std::function<double(std::span<const Tensor>)>& f,
                                               std::span<const Tensor> params, double h) {
  std::vector<Tensor> work(params.begin(), params.end());
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < work.size(); ++p) {
    Tensor g(work[p].shape());
    for (std::size_t i = 0; i < work[p].numel(); ++i) {
      const double x = work[p][i];
      work[p][i] = x + h;
      const double fp = f(work);
      work[p][i] = x - h;
      const double fm = f(work);
      work[p][i] = x;
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// ||a - b|| / ||b||, or ||a - b|| when b vanishes.
inline double relative_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Truncated chain objective evaluated in double precision. The first N-K
/// transitions see the conditioning of `reference_text` as a constant; the
/// last K and the reward see the conditioning of `text`. Its gradient with
/// respect to `text` at text == reference_text is what K-step backprop computes.
inline double truncated_chain_loss(const ModelBundle& m, const ParamSet& text, const ParamSet& reference_text,
                                   std::span<const Prompt> prompts, const Tensor& z_T, const NoiseSchedule& schedule,
                                   const StepPlan& plan, const TrainConfig& cfg) {
  Tape tape(Precision::f64);
  VarMap live = bind_params(tape, text, false);
  VarMap den = bind_params(tape, m.denoiser, false);
  VarMap image = bind_params(tape, m.image, false);
  Var cond = text_encode(live, prompts);
  Tape ref_tape(Precision::f64);
  const Tensor ref_cond = text_encode(bind_params(ref_tape, reference_text, false), prompts).value();
  std::vector<Var> conds;
  for (int i = 0; i < plan.n_steps; ++i) {
    conds.push_back(i < plan.n_steps - cfg.k_steps ? tape.constant(ref_cond) : cond);
  }
  ChainOptions opts = cfg.chain_options();
  opts.grad_steps = plan.n_steps;
  opts.checkpointing = false;
  Var z0 = run_chain(tape, den, conds, z_T, schedule, plan, opts).z0;
  RewardContext ctx;
  ctx.world = &m.world;
  ctx.image = &image;
  ctx.text_embedding = cond;
  return combined_loss(z0, prompts, cfg.rewards, ctx).loss.value().item();
}

}  // namespace rc::testing
