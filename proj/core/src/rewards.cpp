#include "rewardchain/rewards.hpp"

#include <cmath>
#include <stdexcept>

#include "rewardchain/ops.hpp"

namespace rc {

RewardKind parse_reward_kind(std::string_view name) {
  if (name == "image-style") return RewardKind::image_style;
  if (name == "alignment") return RewardKind::alignment;
  if (name == "clip-constraint") return RewardKind::clip_constraint;
  if (name == "collapse-probe" || name == "degenerate-collapse-probe") return RewardKind::collapse_probe;
  throw std::invalid_argument("unknown reward kind '" + std::string(name) + "'");
}

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::image_style: return "image-style";
    case RewardKind::alignment: return "alignment";
    case RewardKind::clip_constraint: return "clip-constraint";
    case RewardKind::collapse_probe: return "collapse-probe";
  }
  return "unknown";
}

double RewardSpec::weight(RewardKind kind) const {
  double w = 0.0;
  for (const RewardTerm& t : terms) {
    if (t.kind == kind) w += t.weight;
  }
  return w;
}

void RewardSpec::validate() const {
  if (terms.empty()) throw std::invalid_argument("reward spec holds no terms");
  for (const RewardTerm& t : terms) {
    if (!std::isfinite(t.weight)) throw std::invalid_argument("reward weight for " + to_string(t.kind) + " is not finite");
  }
}

RewardSpec default_reward_spec() {
  RewardSpec s;
  s.terms = {{RewardKind::clip_constraint, 100.0}, {RewardKind::image_style, 1.0}, {RewardKind::alignment, 100.0}};
  return s;
}

namespace {

Var repeated_target(Var like, const Tensor& row) {
  const std::size_t rows = like.value().rows(), cols = like.value().cols();
  if (row.numel() != cols) throw std::invalid_argument("reward target width differs from sample width");
  Tensor t({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = row[c];
  }
  return like.tape()->constant(std::move(t));
}

Var negative_mean_sq_distance(Var x_hat, const Tensor& target) {
  return ops::scale(ops::squared_error(x_hat, repeated_target(x_hat, target)), -1.0);
}

}  // namespace

Var reward_image(Var x_hat, const ToyWorld& world) { return negative_mean_sq_distance(x_hat, world.style); }

Var reward_collapse_probe(Var x_hat, const ToyWorld& world) {
  return negative_mean_sq_distance(x_hat, world.collapse_point);
}

Var reward_alignment(Var x_hat, std::span<const Prompt> prompts, const ToyWorld& world) {
  const std::size_t rows = x_hat.value().rows(), cols = x_hat.value().cols();
  if (prompts.size() != rows) throw std::invalid_argument("reward_alignment: one prompt per sample row required");
  Tensor targets({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    Tensor s = world.pattern_sum(prompts[r]);
    if (s.numel() != cols) throw std::invalid_argument("reward_alignment: sample width differs from world");
    for (std::size_t c = 0; c < cols; ++c) targets.at(r, c) = s[c];
  }
  return ops::mean(ops::cosine_rows(x_hat, x_hat.tape()->constant(std::move(targets))));
}

Var reward_clip_constraint(Var x_hat, Var text_embedding, const VarMap& image) {
  return ops::mean(ops::cosine_rows(image_encode(image, x_hat), text_embedding));
}

Var evaluate_reward(RewardKind kind, Var x_hat, std::span<const Prompt> prompts, const RewardContext& ctx,
                    bool use_frozen_copy) {
  if (!ctx.world) throw std::invalid_argument("reward context has no world");
  switch (kind) {
    case RewardKind::image_style: return reward_image(x_hat, *ctx.world);
    case RewardKind::alignment: return reward_alignment(x_hat, prompts, *ctx.world);
    case RewardKind::collapse_probe: return reward_collapse_probe(x_hat, *ctx.world);
    case RewardKind::clip_constraint: {
      if (!ctx.image) throw std::invalid_argument("clip constraint needs the image encoder");
      if (use_frozen_copy) {
        if (!ctx.frozen_text_embedding) throw std::invalid_argument("clip constraint needs the frozen text embedding");
        return reward_clip_constraint(x_hat, *ctx.frozen_text_embedding, *ctx.image);
      }
      if (!ctx.text_embedding.valid()) throw std::invalid_argument("clip constraint needs the text embedding");
      return reward_clip_constraint(x_hat, ctx.text_embedding, *ctx.image);
    }
  }
  throw std::invalid_argument("unknown reward kind");
}

LossTerms combined_loss(Var x_hat, std::span<const Prompt> prompts, const RewardSpec& spec, const RewardContext& ctx) {
  spec.validate();
  LossTerms out;
  for (const RewardTerm& term : spec.terms) {
    Var r = evaluate_reward(term.kind, x_hat, prompts, ctx, spec.constraint_uses_frozen_copy);
    Var contrib = ops::scale(r, -term.weight);
    out.loss = out.loss.valid() ? ops::add(out.loss, contrib) : contrib;
    out.rewards.emplace_back(term.kind, r);
  }
  return out;
}

double RewardScores::get(RewardKind kind) const {
  switch (kind) {
    case RewardKind::image_style: return image;
    case RewardKind::alignment: return align;
    case RewardKind::clip_constraint: return clip;
    case RewardKind::collapse_probe: return collapse;
  }
  return 0.0;
}

RewardScores score_samples(const Tensor& x_hat, std::span<const Prompt> prompts, const Tensor& cond,
                           const ParamSet& image, const ToyWorld& world) {
  Tape tape;
  Var x = tape.constant(x_hat);
  VarMap iv = bind_params(tape, image, false);
  RewardScores s;
  s.image = reward_image(x, world).value().item();
  s.align = reward_alignment(x, prompts, world).value().item();
  s.clip = reward_clip_constraint(x, tape.constant(cond), iv).value().item();
  s.collapse = reward_collapse_probe(x, world).value().item();
  return s;
}

double combined_reward(const RewardScores& scores, const RewardSpec& spec) {
  double total = 0.0;
  for (const RewardTerm& t : spec.terms) total += t.weight * scores.get(t.kind);
  return total;
}

double combined_reward_supremum(const RewardSpec& spec) {
  double s = 0.0;
  for (const RewardTerm& t : spec.terms) {
    if (t.weight < 0.0) throw std::invalid_argument("reward supremum is unbounded for negative weights");
    const bool cosine = t.kind == RewardKind::alignment || t.kind == RewardKind::clip_constraint;
    if (cosine) s += t.weight;
  }
  return s;
}

}  // namespace rc
