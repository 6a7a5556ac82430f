#include "rewardchain/finetune.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "rewardchain/ops.hpp"
#include "rewardchain/optim.hpp"

namespace rc {

Regime parse_regime(std::string_view name) {
  if (name == "direct") return Regime::direct;
  if (name == "prompt-chain") return Regime::prompt_chain;
  if (name == "unet-chain") return Regime::unet_chain;
  throw std::invalid_argument("unknown regime '" + std::string(name) + "'");
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::direct: return "direct";
    case Regime::prompt_chain: return "prompt-chain";
    case Regime::unet_chain: return "unet-chain";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (train_steps < 2) throw std::invalid_argument("train_steps must be at least 2");
  if (n_steps < 1 || n_steps > train_steps - 1) {
    throw std::invalid_argument("inference steps N must lie in [1, " + std::to_string(train_steps - 1) + "]");
  }
  if (k_steps < 1 || k_steps > n_steps) {
    throw std::invalid_argument("backprop steps K must satisfy 1 <= K <= N (K=" + std::to_string(k_steps) +
                                ", N=" + std::to_string(n_steps) + ")");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (batch < 1) throw std::invalid_argument("batch size must be positive");
  if (!(guidance >= 0.0)) throw std::invalid_argument("guidance scale must be non-negative");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint interval must be non-negative");
  rewards.validate();
}

ChainOptions TrainConfig::chain_options() const {
  ChainOptions o;
  o.sampler = sampler;
  o.cfg = cfg_in_chain;
  o.guidance = guidance;
  o.grad_steps = k_steps;
  o.checkpointing = checkpointing;
  return o;
}

namespace {

const ParamSet& frozen_text_of(const ModelBundle& m) { return m.base_text.empty() ? m.text : m.base_text; }

RewardContext make_context(const ModelBundle& m, Tape& tape, const VarMap& image, Var cond,
                           std::span<const Prompt> prompts, const RewardSpec& spec) {
  RewardContext ctx;
  ctx.world = &m.world;
  ctx.image = &image;
  ctx.text_embedding = cond;
  if (spec.constraint_uses_frozen_copy) {
    Tape scratch;
    ctx.frozen_text_embedding = tape.constant(text_encode(bind_params(scratch, frozen_text_of(m), false), prompts).value());
  }
  return ctx;
}

StepOutput finish(Tape& tape, const LossTerms& terms, const VarMap& trained, Var x_hat, Var cond) {
  StepOutput out;
  GradMap g = tape.backward(terms.loss);
  out.grads = collect_grads(trained, g);
  out.loss = terms.loss.value().item();
  for (const auto& [kind, r] : terms.rewards) out.rewards.emplace_back(kind, r.value().item());
  out.x_hat = x_hat.value();
  out.cond = cond.value();
  return out;
}

void check_batch(std::span<const Prompt> prompts, const Tensor& z) {
  if (prompts.empty()) throw std::invalid_argument("empty prompt batch");
  if (z.rank() != 2 || z.rows() != prompts.size()) {
    throw std::invalid_argument("latent batch " + shape_str(z.shape()) + " does not match " +
                                std::to_string(prompts.size()) + " prompts");
  }
}

}  // namespace

StepOutput direct_finetune_step(const ModelBundle& m, std::span<const Prompt> prompts, const Tensor& z_t,
                                std::span<const int> t, const NoiseSchedule& schedule, const TrainConfig& cfg) {
  check_batch(prompts, z_t);
  if (t.size() != 1 && t.size() != prompts.size()) throw std::invalid_argument("expected one timestep or one per row");
  Tape tape;
  VarMap text = bind_params(tape, m.text, true);
  VarMap den = bind_params(tape, m.denoiser, false);
  VarMap image = bind_params(tape, m.image, false);
  Var cond = text_encode(text, prompts);
  Var z = tape.constant(z_t);
  Var eps = denoise(den, z, t, cond, schedule);
  if (cfg.cfg_in_chain) {
    eps = cfg_combine(eps, denoise(den, z, t, null_condition(den, prompts.size()), schedule), cfg.guidance);
  }
  Var x_hat = predict_x0(z, eps, t, schedule);
  LossTerms terms = combined_loss(x_hat, prompts, cfg.rewards, make_context(m, tape, image, cond, prompts, cfg.rewards));
  return finish(tape, terms, text, x_hat, cond);
}

StepOutput direct_finetune_step(const ModelBundle& m, const PairBatch& batch, std::span<const int> t,
                                const Tensor& eps, const NoiseSchedule& schedule, const TrainConfig& cfg) {
  Tape tape;
  Tensor z_t = forward_diffuse(tape.constant(batch.x), tape.constant(eps), t, schedule).value();
  return direct_finetune_step(m, batch.prompts, z_t, t, schedule, cfg);
}

StepOutput chain_finetune_step(const ModelBundle& m, std::span<const Prompt> prompts, const Tensor& z_T,
                               const NoiseSchedule& schedule, const StepPlan& plan, const TrainConfig& cfg,
                               bool record_step_norms) {
  check_batch(prompts, z_T);
  if (cfg.k_steps < 1 || cfg.k_steps > plan.n_steps) {
    throw std::invalid_argument("backprop steps K must satisfy 1 <= K <= N (K=" + std::to_string(cfg.k_steps) +
                                ", N=" + std::to_string(plan.n_steps) + ")");
  }
  if (cfg.regime == Regime::direct) throw std::invalid_argument("chain_finetune_step needs a chain regime");
  const bool train_text = cfg.regime == Regime::prompt_chain;
  Tape tape;
  VarMap text = bind_params(tape, m.text, train_text);
  VarMap den = bind_params(tape, m.denoiser, !train_text);
  VarMap image = bind_params(tape, m.image, false);
  Var cond = text_encode(text, prompts);
  ChainOptions opts = cfg.chain_options();
  opts.grad_steps = cfg.k_steps;
  opts.isolate_step_conditioning = record_step_norms;
  const Var conds[1] = {cond};
  ChainResult chain = run_chain(tape, den, conds, z_T, schedule, plan, opts);
  LossTerms terms =
      combined_loss(chain.z0, prompts, cfg.rewards, make_context(m, tape, image, cond, prompts, cfg.rewards));
  StepOutput out = finish(tape, terms, train_text ? text : den, chain.z0, cond);
  for (const Var& c : chain.step_conditioning) {
    auto g = tape.grad(c.id());
    out.step_grad_norms.push_back(g ? l2_norm(*g) : 0.0);
  }
  return out;
}

TrainResult run_training(const TrainConfig& cfg, const ModelBundle& start, const PromptSet& train_prompts,
                         const CheckpointFn& on_checkpoint) {
  cfg.validate();
  if (train_prompts.empty()) throw std::invalid_argument("training prompt set is empty");
  if (start.text.empty() || start.image.empty() || start.denoiser.empty() || start.world.patterns.empty()) {
    throw std::invalid_argument("training needs text, image, denoiser and world checkpoints");
  }
  const NoiseSchedule schedule = make_schedule(cfg.train_steps, cfg.schedule);
  const StepPlan plan = make_step_plan(cfg.n_steps, schedule);
  for (const Prompt& p : train_prompts.prompts) start.world.check_prompt(p);

  TrainResult result;
  result.bundle = start;
  ModelBundle& m = result.bundle;
  if (cfg.regime != Regime::unet_chain && m.base_text.empty()) m.base_text = start.text;
  AdamWState state;
  const AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const std::size_t d = m.world.data_dim();

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    std::vector<Prompt> prompts;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      prompts.push_back(train_prompts.prompts[rng.below(train_prompts.size())]);
    }
    StepOutput step;
    if (cfg.regime == Regime::direct) {
      PairBatch batch;
      batch.prompts = prompts;
      batch.x = Tensor({cfg.batch, d});
      for (std::size_t r = 0; r < cfg.batch; ++r) {
        Tensor base = m.world.pattern_sum(prompts[r]);
        for (std::size_t i = 0; i < d; ++i) batch.x.at(r, i) = base[i] + m.world.noise_scale * rng.normal();
      }
      batch.x.round_to(Precision::f32);
      std::vector<int> t(cfg.batch);
      for (int& ti : t) ti = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.train_steps)));
      Tensor eps = rng.normal_tensor({cfg.batch, d});
      step = direct_finetune_step(m, batch, t, eps, schedule, cfg);
    } else {
      Tensor z_T = rng.normal_tensor({cfg.batch, d});
      step = chain_finetune_step(m, prompts, z_T, schedule, plan, cfg);
    }
    if (cfg.grad_clip > 0.0) clip_global_norm(step.grads, cfg.grad_clip);
    ParamSet& trained = cfg.regime == Regime::unet_chain ? m.denoiser : m.text;
    adamw_update(trained, step.grads, state, opt);

    const RewardScores scores = score_samples(step.x_hat, prompts, step.cond, m.image, m.world);
    result.metrics.push_back({it, step.loss, scores.image, scores.align, scores.clip});
    if (on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 &&
        it + 1 < cfg.iterations) {
      on_checkpoint(it + 1, m);
    }
  }
  return result;
}

std::string metrics_csv(const std::vector<IterationMetrics>& metrics) {
  std::ostringstream out;
  out << "iter,loss,reward_image,reward_align,reward_clip\n";
  char buf[160];
  for (const IterationMetrics& m : metrics) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", m.iter, m.loss, m.reward_image, m.reward_align,
                  m.reward_clip);
    out << buf;
  }
  return out.str();
}

}  // namespace rc
