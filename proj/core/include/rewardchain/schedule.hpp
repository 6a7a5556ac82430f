#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rewardchain/tape.hpp"

namespace rc {

enum class ScheduleKind { linear_beta, cosine };
enum class SamplerKind { ddim, euler };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string to_string(ScheduleKind kind);
SamplerKind parse_sampler_kind(std::string_view name);
std::string to_string(SamplerKind kind);

/// Variance-preserving noise schedule over training timesteps 0..train_steps-1:
/// z_t = alpha[t] * x + sigma[t] * eps with alpha^2 + sigma^2 = 1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int train_steps = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;
  /// d(log alpha)/dt of the continuous schedule, sampled at each timestep.
  std::vector<double> log_alpha_rate;

  void check_timestep(int t) const;
};

NoiseSchedule make_schedule(int train_steps, ScheduleKind kind);

/// Sampling timesteps: n_steps evaluation points starting at train_steps-1
/// with a uniform stride, followed by the terminal timestep 0.
struct StepPlan {
  int n_steps = 0;
  std::vector<int> timesteps;

  int from(int step) const { return timesteps.at(static_cast<std::size_t>(step)); }
  int to(int step) const { return timesteps.at(static_cast<std::size_t>(step) + 1); }
};

StepPlan make_step_plan(int n_steps, const NoiseSchedule& schedule);

/// Coefficients of one denoising transition t -> t_prev.
struct StepCoeffs {
  double alpha = 1.0;
  double sigma = 0.0;
  double alpha_prev = 1.0;
  double sigma_prev = 0.0;
};

StepCoeffs step_coeffs(const NoiseSchedule& schedule, int t, int t_prev);

/// z_t = alpha_t * x + sigma_t * eps. `t` holds one timestep per row or a single
/// timestep for all rows.
Var forward_diffuse(Var x, Var eps, std::span<const int> t, const NoiseSchedule& schedule);
Var forward_diffuse(Var x, Var eps, int t, const NoiseSchedule& schedule);

/// x_hat = (z_t - sigma_t * eps_hat) / alpha_t.
Var predict_x0(Var z, Var eps_hat, std::span<const double> alpha, std::span<const double> sigma);
Var predict_x0(Var z, Var eps_hat, std::span<const int> t, const NoiseSchedule& schedule);
Var predict_x0(Var z, Var eps_hat, int t, const NoiseSchedule& schedule);

/// Deterministic (eta = 0) DDIM transition.
Var ddim_step(Var z, Var eps_hat, const StepCoeffs& c);
Var ddim_step(Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule);

/// Explicit Euler step of the probability-flow ODE
///   dz/dt = r(t) * (z - eps_hat / sigma_t),  r = d(log alpha)/dt,
/// which is the VP flow written in z-space with a noise-prediction model.
Var euler_step(Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule);

Var sampler_step(SamplerKind kind, Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule);

/// eps = w * eps_cond - (w - 1) * eps_uncond.
Var cfg_combine(Var eps_cond, Var eps_uncond, double w);

}  // namespace rc
