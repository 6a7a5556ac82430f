#include "rewardchain/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rewardchain/ops.hpp"

namespace rc {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear-beta" || name == "linear") return ScheduleKind::linear_beta;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "linear-beta"; }

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "ddim") return SamplerKind::ddim;
  if (name == "euler") return SamplerKind::euler;
  throw std::invalid_argument("unknown scheduler kind '" + std::string(name) + "'");
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::ddim ? "ddim" : "euler"; }

void NoiseSchedule::check_timestep(int t) const {
  if (t < 0 || t >= train_steps) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(train_steps) + ")");
  }
}

NoiseSchedule make_schedule(int train_steps, ScheduleKind kind) {
  if (train_steps < 2) throw std::invalid_argument("schedule needs at least 2 training timesteps");
  NoiseSchedule s;
  s.kind = kind;
  s.train_steps = train_steps;
  const auto n = static_cast<std::size_t>(train_steps);
  s.alpha.resize(n);
  s.sigma.resize(n);
  s.log_alpha_rate.resize(n);
  const double T = train_steps;

  if (kind == ScheduleKind::cosine) {
    constexpr double offset = 0.008;
    const double rate = std::numbers::pi / (2.0 * T * (1.0 + offset));
    auto theta = [&](double t) { return (t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0; };
    const double c0 = std::cos(theta(0.0));
    for (std::size_t t = 0; t < n; ++t) {
      const double th = theta(static_cast<double>(t));
      s.alpha[t] = std::cos(th) / c0;
      s.log_alpha_rate[t] = -std::tan(th) * rate;
    }
  } else {
    constexpr double beta_start = 1e-4;
    constexpr double beta_end = 2e-2;
    auto beta = [&](double t) { return beta_start + (beta_end - beta_start) * t / (T - 1.0); };
    double log_alpha = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double b = beta(static_cast<double>(t));
      log_alpha += 0.5 * std::log1p(-b);
      s.alpha[t] = std::exp(log_alpha);
      s.log_alpha_rate[t] = 0.5 * std::log1p(-b);
    }
  }
  for (std::size_t t = 0; t < n; ++t) s.sigma[t] = std::sqrt(std::max(0.0, 1.0 - s.alpha[t] * s.alpha[t]));
  return s;
}

StepPlan make_step_plan(int n_steps, const NoiseSchedule& schedule) {
  const int T = schedule.train_steps;
  if (n_steps < 1 || n_steps > T - 1) {
    throw std::invalid_argument("inference steps must lie in [1, " + std::to_string(T - 1) + "], got " +
                                std::to_string(n_steps));
  }
  StepPlan plan;
  plan.n_steps = n_steps;
  const int stride = T / n_steps;
  for (int i = 0; i < n_steps; ++i) plan.timesteps.push_back(T - 1 - i * stride);
  plan.timesteps.push_back(0);
  return plan;
}

StepCoeffs step_coeffs(const NoiseSchedule& schedule, int t, int t_prev) {
  schedule.check_timestep(t);
  schedule.check_timestep(t_prev);
  if (t_prev >= t) {
    throw std::invalid_argument("denoising step must move to an earlier timestep (t=" + std::to_string(t) +
                                ", t_prev=" + std::to_string(t_prev) + ")");
  }
  const auto i = static_cast<std::size_t>(t), j = static_cast<std::size_t>(t_prev);
  return StepCoeffs{schedule.alpha[i], schedule.sigma[i], schedule.alpha[j], schedule.sigma[j]};
}

namespace {

void gather_coeffs(std::span<const int> t, const NoiseSchedule& schedule, std::vector<double>& alpha,
                   std::vector<double>& sigma) {
  if (t.empty()) throw std::invalid_argument("no timesteps given");
  alpha.clear();
  sigma.clear();
  for (int ti : t) {
    schedule.check_timestep(ti);
    alpha.push_back(schedule.alpha[static_cast<std::size_t>(ti)]);
    sigma.push_back(schedule.sigma[static_cast<std::size_t>(ti)]);
  }
}

}  // namespace

Var forward_diffuse(Var x, Var eps, std::span<const int> t, const NoiseSchedule& schedule) {
  std::vector<double> a, s;
  gather_coeffs(t, schedule, a, s);
  return ops::axpby_rows(x, eps, a, s);
}

Var forward_diffuse(Var x, Var eps, int t, const NoiseSchedule& schedule) {
  const int ts[1] = {t};
  return forward_diffuse(x, eps, ts, schedule);
}

Var predict_x0(Var z, Var eps_hat, std::span<const double> alpha, std::span<const double> sigma) {
  if (alpha.size() != sigma.size()) throw std::invalid_argument("predict_x0: coefficient count mismatch");
  std::vector<double> inv(alpha.size()), neg(alpha.size());
  for (std::size_t r = 0; r < alpha.size(); ++r) {
    if (!(alpha[r] >= 1e-6)) throw std::domain_error("predict_x0: alpha_t below 1e-6, x prediction is singular");
    inv[r] = 1.0 / alpha[r];
    neg[r] = -sigma[r] / alpha[r];
  }
  return ops::axpby_rows(z, eps_hat, inv, neg);
}

Var predict_x0(Var z, Var eps_hat, std::span<const int> t, const NoiseSchedule& schedule) {
  std::vector<double> a, s;
  gather_coeffs(t, schedule, a, s);
  return predict_x0(z, eps_hat, a, s);
}

Var predict_x0(Var z, Var eps_hat, int t, const NoiseSchedule& schedule) {
  const int ts[1] = {t};
  return predict_x0(z, eps_hat, ts, schedule);
}

Var ddim_step(Var z, Var eps_hat, const StepCoeffs& c) {
  const double a[1] = {c.alpha};
  const double s[1] = {c.sigma};
  Var x_hat = predict_x0(z, eps_hat, a, s);
  return ops::axpby(x_hat, eps_hat, c.alpha_prev, c.sigma_prev);
}

Var ddim_step(Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule) {
  return ddim_step(z, eps_hat, step_coeffs(schedule, t, t_prev));
}

Var euler_step(Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule) {
  const StepCoeffs c = step_coeffs(schedule, t, t_prev);
  if (!(c.sigma > 0.0)) throw std::domain_error("euler_step: sigma_t must be positive");
  const double rate = schedule.log_alpha_rate[static_cast<std::size_t>(t)];
  const double dt = static_cast<double>(t_prev - t);
  return ops::axpby(z, eps_hat, 1.0 + dt * rate, -dt * rate / c.sigma);
}

Var sampler_step(SamplerKind kind, Var z, Var eps_hat, int t, int t_prev, const NoiseSchedule& schedule) {
  return kind == SamplerKind::ddim ? ddim_step(z, eps_hat, t, t_prev, schedule)
                                   : euler_step(z, eps_hat, t, t_prev, schedule);
}

Var cfg_combine(Var eps_cond, Var eps_uncond, double w) { return ops::axpby(eps_cond, eps_uncond, w, -(w - 1.0)); }

}  // namespace rc
