#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rewardchain/models.hpp"
#include "rewardchain/world.hpp"

namespace rc {

enum class RewardKind { image_style, alignment, clip_constraint, collapse_probe };

RewardKind parse_reward_kind(std::string_view name);
std::string to_string(RewardKind kind);

struct RewardTerm {
  RewardKind kind = RewardKind::image_style;
  double weight = 1.0;
};

struct RewardSpec {
  std::vector<RewardTerm> terms;
  /// Score the similarity constraint against a frozen copy of the starting
  /// text encoder instead of the encoder being trained.
  bool constraint_uses_frozen_copy = false;

  /// Sum of weights of all terms of `kind`.
  double weight(RewardKind kind) const;
  bool clip_active() const { return weight(RewardKind::clip_constraint) > 0.0; }
  void validate() const;
};

/// clip-constraint 100, image-style 1, alignment 100.
RewardSpec default_reward_spec();

/// Everything a reward may read besides the sample itself.
struct RewardContext {
  const ToyWorld* world = nullptr;
  const VarMap* image = nullptr;
  /// Conditioning of the batch under the encoder being trained, [B, C].
  Var text_embedding;
  /// Conditioning under the frozen starting encoder, when available.
  std::optional<Var> frozen_text_embedding;
};

// Every reward returns the batch mean of a per-row score as a rank-0 Var.

/// -||x_hat - s||^2 / D for the world's style vector s.
Var reward_image(Var x_hat, const ToyWorld& world);
/// cos(x_hat, pattern sum of the prompt).
Var reward_alignment(Var x_hat, std::span<const Prompt> prompts, const ToyWorld& world);
/// cos(I(x_hat), c).
Var reward_clip_constraint(Var x_hat, Var text_embedding, const VarMap& image);
/// -||x_hat - c0||^2 / D toward the world's collapse point, for every prompt.
Var reward_collapse_probe(Var x_hat, const ToyWorld& world);

Var evaluate_reward(RewardKind kind, Var x_hat, std::span<const Prompt> prompts, const RewardContext& ctx,
                    bool use_frozen_copy);

struct LossTerms {
  Var loss;
  std::vector<std::pair<RewardKind, Var>> rewards;
};

/// L = -sum_i weight_i * R_i.
LossTerms combined_loss(Var x_hat, std::span<const Prompt> prompts, const RewardSpec& spec, const RewardContext& ctx);

struct RewardScores {
  double image = 0.0;
  double align = 0.0;
  double clip = 0.0;
  double collapse = 0.0;

  double get(RewardKind kind) const;
};

/// Batch means of every reward for fixed samples. `cond` [B, C] is the text
/// embedding the clip constraint compares against.
RewardScores score_samples(const Tensor& x_hat, std::span<const Prompt> prompts, const Tensor& cond,
                           const ParamSet& image, const ToyWorld& world);

/// sum_i weight_i * R_i for already computed scores.
double combined_reward(const RewardScores& scores, const RewardSpec& spec);

/// Upper bound of the combined reward: each reward at its supremum.
double combined_reward_supremum(const RewardSpec& spec);

}  // namespace rc
