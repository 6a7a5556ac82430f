#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rewardchain/bundle.hpp"
#include "rewardchain/chain.hpp"
#include "rewardchain/rewards.hpp"

namespace rc {

enum class Regime { direct, prompt_chain, unet_chain };

Regime parse_regime(std::string_view name);
std::string to_string(Regime regime);

struct TrainConfig {
  Regime regime = Regime::prompt_chain;
  ScheduleKind schedule = ScheduleKind::cosine;
  int train_steps = 1000;
  SamplerKind sampler = SamplerKind::ddim;
  /// Inference steps N of the training chain.
  int n_steps = 25;
  /// Backpropagated steps K: the last K transitions of the chain.
  int k_steps = 5;
  bool cfg_in_chain = true;
  double guidance = 7.5;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  int iterations = 500;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; <= 0 disables it.
  double grad_clip = 1.0;
  bool checkpointing = true;
  /// Save a checkpoint every this many iterations (0: only at the end).
  int checkpoint_every = 0;
  RewardSpec rewards = default_reward_spec();

  void validate() const;
  ChainOptions chain_options() const;
};

struct StepOutput {
  double loss = 0.0;
  /// Value of every reward term of the spec, in spec order.
  std::vector<std::pair<RewardKind, double>> rewards;
  /// Gradients of the trained parameter set.
  ParamSet grads;
  Tensor x_hat;
  Tensor cond;
  /// Norm of the conditioning gradient contributed through each recorded
  /// transition (chain order), when requested.
  std::vector<double> step_grad_norms;
};

/// Direct x-hat fine-tuning from given noisy latents z_t at per-row timesteps
/// `t`: gradients land on the text encoder only.
StepOutput direct_finetune_step(const ModelBundle& models, std::span<const Prompt> prompts, const Tensor& z_t,
                                std::span<const int> t, const NoiseSchedule& schedule, const TrainConfig& config);
/// Same, with z_t = forward_diffuse(x, eps, t).
StepOutput direct_finetune_step(const ModelBundle& models, const PairBatch& batch, std::span<const int> t,
                                const Tensor& eps, const NoiseSchedule& schedule, const TrainConfig& config);

/// Full-chain fine-tuning step from z_T over `plan`, backpropagating through
/// the last config.k_steps transitions. config.regime selects whether the
/// text encoder (prompt_chain) or the denoiser (unet_chain) receives gradients.
StepOutput chain_finetune_step(const ModelBundle& models, std::span<const Prompt> prompts, const Tensor& z_T,
                               const NoiseSchedule& schedule, const StepPlan& plan, const TrainConfig& config,
                               bool record_step_norms = false);

struct IterationMetrics {
  int iter = 0;
  double loss = 0.0;
  double reward_image = 0.0;
  double reward_align = 0.0;
  double reward_clip = 0.0;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<IterationMetrics> metrics;
};

using CheckpointFn = std::function<void(int iterations_done, const ModelBundle& bundle)>;

/// Runs config.iterations AdamW updates. Each iteration draws its batch
/// (prompts with replacement from `train_prompts`, z_T, and for the direct
/// regime x, t and eps) from a generator seeded by (seed, iteration).
TrainResult run_training(const TrainConfig& config, const ModelBundle& start, const PromptSet& train_prompts,
                         const CheckpointFn& on_checkpoint = {});

/// "iter,loss,reward_image,reward_align,reward_clip" rows.
std::string metrics_csv(const std::vector<IterationMetrics>& metrics);

}  // namespace rc
