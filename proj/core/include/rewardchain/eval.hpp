#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rewardchain/finetune.hpp"
#include "rewardchain/inference.hpp"

namespace rc {

/// A table emitted both as CSV and as aligned text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const;
  std::string text() const;
};

std::string format_number(double v);

inline constexpr std::size_t kMinEvalPrompts = 32;

struct EvalConfig {
  SamplerConfig sampler;
  /// Noise seeds per prompt; seed k shares one z_T across all prompts.
  int seeds = 4;
  /// Weights of the combined reward column.
  RewardSpec rewards = default_reward_spec();

  void validate() const;
};

struct EvalReport {
  std::size_t prompts = 0;
  int seeds = 0;
  RewardScores means;
  double combined = 0.0;
  /// Mean pairwise distance among samples of distinct prompts (same seed).
  double diversity = 0.0;
  /// Mean pairwise distance among samples of one prompt across seeds.
  double spread = 0.0;
};

/// Samples every prompt under every seed and scores the batch. The clip score
/// compares against the bundle's current text encoder.
EvalReport evaluate(const ModelBundle& bundle, std::span<const Prompt> prompts, const EvalConfig& config,
                    std::uint64_t seed);

/// Pairwise distance metrics of samples laid out seed-major: row s * P + i is
/// prompt i under seed s.
double diversity_of(const Tensor& x, std::size_t prompts, int seeds);
double spread_of(const Tensor& x, std::size_t prompts, int seeds);

Table report_table(std::span<const std::pair<std::string, EvalReport>> reports);

/// One fine-tune per train K, each evaluated with the fine-tuned encoder on the
/// last test_N sampling steps. Cell seeds are mix_seed(seed, K, N).
Table ablate_steps(const TrainConfig& train, const EvalConfig& eval, const ModelBundle& start,
                   const PromptSet& train_prompts, std::span<const Prompt> eval_prompts,
                   std::span<const int> train_k, std::span<const int> test_n, std::uint64_t seed);

/// Evaluates `bundle` under every (sampler, steps) pair. The fine-tuned share
/// of the chain keeps the proportion eval.sampler.finetuned_steps / n_steps.
Table ablate_schedulers(const EvalConfig& eval, const ModelBundle& bundle, std::span<const Prompt> eval_prompts,
                        std::span<const SamplerKind> kinds, std::span<const int> steps, std::uint64_t seed);

struct CollapseConfig {
  double probe_weight = 1.0;
  double clip_weight = 100.0;
  /// The constrained run scores the similarity term against the frozen
  /// starting encoder.
  bool frozen_copy = true;
};

struct CollapseReport {
  EvalReport baseline;
  EvalReport unconstrained;
  EvalReport constrained;
  ModelBundle unconstrained_bundle;
  ModelBundle constrained_bundle;

  Table table() const;
};

/// Two runs with the collapse-probe reward, without and with the similarity
/// constraint, from the same start and seed.
CollapseReport collapse_experiment(const TrainConfig& train, const CollapseConfig& collapse, const EvalConfig& eval,
                                   const ModelBundle& start, const PromptSet& train_prompts,
                                   std::span<const Prompt> eval_prompts, std::uint64_t seed);

}  // namespace rc
