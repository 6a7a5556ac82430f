#include "rewardchain/chain.hpp"

#include <stdexcept>
#include <string>

#include "rewardchain/ops.hpp"

namespace rc {

Var chain_step(const VarMap& denoiser, Var z, Var cond, int t, int t_prev, const NoiseSchedule& schedule,
               const ChainOptions& options) {
  Var eps = denoise(denoiser, z, t, cond, schedule);
  if (options.cfg) {
    Var uncond = denoise(denoiser, z, t, null_condition(denoiser, z.value().rows()), schedule);
    eps = cfg_combine(eps, uncond, options.guidance);
  }
  return sampler_step(options.sampler, z, eps, t, t_prev, schedule);
}

ChainResult run_chain(Tape& tape, const VarMap& denoiser, std::span<const Var> conds, const Tensor& z_T,
                      const NoiseSchedule& schedule, const StepPlan& plan, const ChainOptions& options) {
  const int n = plan.n_steps;
  if (options.grad_steps < 0 || options.grad_steps > n) {
    throw std::invalid_argument("gradient steps must lie in [0, " + std::to_string(n) + "]");
  }
  if (conds.size() != 1 && conds.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("expected one conditioning or one per step");
  }
  if (options.cfg && !(options.guidance >= 0.0)) throw std::invalid_argument("guidance scale must be non-negative");
  auto cond_at = [&](int i) { return conds.size() == 1 ? conds[0] : conds[static_cast<std::size_t>(i)]; };
  const int first_recorded = n - options.grad_steps;

  Tensor z_value = z_T;
  if (first_recorded > 0) {
    Tape scratch(tape.precision());
    scratch.set_debug(tape.debug());
    VarMap frozen;
    for (const auto& [name, v] : denoiser) frozen.emplace(name, scratch.constant(v.value()));
    Var z = scratch.constant(z_T);
    for (int i = 0; i < first_recorded; ++i) {
      Var c = scratch.constant(cond_at(i).value());
      z = chain_step(frozen, z, c, plan.from(i), plan.to(i), schedule, options);
    }
    z_value = z.value();
  }

  ChainResult result;
  Var z = tape.constant(std::move(z_value));
  std::vector<std::string> names;
  std::vector<Var> param_vars;
  for (const auto& [name, v] : denoiser) {
    names.push_back(name);
    param_vars.push_back(v);
  }
  for (int i = first_recorded; i < n; ++i) {
    Var c = cond_at(i);
    if (options.isolate_step_conditioning) {
      c = ops::scale(c, 1.0);
      result.step_conditioning.push_back(c);
    }
    const int t = plan.from(i), t_prev = plan.to(i);
    if (!options.checkpointing) {
      z = chain_step(denoiser, z, c, t, t_prev, schedule, options);
      continue;
    }
    std::vector<Var> inputs = {z, c};
    inputs.insert(inputs.end(), param_vars.begin(), param_vars.end());
    SegmentFn fn = [names, t, t_prev, &schedule, options](std::span<const Var> in) {
      VarMap params;
      for (std::size_t k = 0; k < names.size(); ++k) params.emplace(names[k], in[k + 2]);
      return std::vector<Var>{chain_step(params, in[0], in[1], t, t_prev, schedule, options)};
    };
    z = checkpoint_segment(tape, fn, inputs).front();
  }
  result.z0 = z;
  return result;
}

}  // namespace rc
