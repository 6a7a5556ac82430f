#pragma once

#include <span>
#include <vector>

#include "rewardchain/models.hpp"
#include "rewardchain/schedule.hpp"

namespace rc {

struct ChainOptions {
  SamplerKind sampler = SamplerKind::ddim;
  bool cfg = false;
  double guidance = 7.5;
  /// The last `grad_steps` transitions are recorded for backward; earlier ones
  /// run detached on a scratch tape.
  int grad_steps = 0;
  /// Wrap each recorded transition in a checkpoint segment.
  bool checkpointing = true;
  /// Give every recorded transition its own copy of the conditioning so the
  /// gradient reaching it through that transition can be read back.
  bool isolate_step_conditioning = false;
};

/// One denoising transition t -> t_prev: predict the noise (optionally with
/// classifier-free guidance against the learned null conditioning) and apply
/// the sampler.
Var chain_step(const VarMap& denoiser, Var z, Var cond, int t, int t_prev, const NoiseSchedule& schedule,
               const ChainOptions& options);

struct ChainResult {
  Var z0;
  /// Per-transition conditioning copies of the recorded steps, in chain order,
  /// when isolate_step_conditioning is set.
  std::vector<Var> step_conditioning;
};

/// Runs the whole plan from z_T. `conds` holds one conditioning per step or a
/// single one shared by all steps. Every Var must live on `tape`.
ChainResult run_chain(Tape& tape, const VarMap& denoiser, std::span<const Var> conds, const Tensor& z_T,
                      const NoiseSchedule& schedule, const StepPlan& plan, const ChainOptions& options);

}  // namespace rc
