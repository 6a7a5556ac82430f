#pragma once

#include <span>
#include <vector>

#include "rewardchain/params.hpp"
#include "rewardchain/rng.hpp"
#include "rewardchain/schedule.hpp"

namespace rc {

using Prompt = std::vector<int>;

struct ModelDims {
  std::size_t data_dim = 16;
  std::size_t cond_dim = 8;
  std::size_t token_dim = 8;
  std::size_t vocab = 32;
  std::size_t hidden = 64;
  std::size_t time_dim = 8;
};

/// Initial contrastive logit scale, ln(1 / 0.07).
inline constexpr double kInitLogitScale = 2.659260036932778;
/// Upper clamp of the logit scale, ln(100).
inline constexpr double kMaxLogitScale = 4.605170185988092;

// Parameters are drawn uniformly in +-1/sqrt(fan_in); biases start at zero.
ParamSet init_text_encoder(const ModelDims& dims, Rng& rng);
ParamSet init_image_encoder(const ModelDims& dims, Rng& rng);
ParamSet init_denoiser(const ModelDims& dims, Rng& rng);

/// Fixed sinusoidal embedding of integer timesteps -> [t.size(), width].
Tensor time_embedding(std::span<const int> t, int train_steps, std::size_t width);

/// Token embeddings mean-pooled per prompt, then two dense layers -> [B, C].
Var text_encode(const VarMap& params, std::span<const Prompt> prompts);
Var text_encode(const VarMap& params, const Prompt& prompt);

/// Pre-activation of the image encoder's first layer -> [B, H].
Var image_hidden_preactivation(const VarMap& params, Var x);
/// [B, D] -> [B, C].
Var image_encode(const VarMap& params, Var x);

/// eps_hat for [B, D] latents at per-row (or shared) timesteps under
/// conditioning [B, C]:
///   eps_hat = sigma_t * z + alpha_t * mlp([z, temb(t), cond]).
/// The fixed skip carries the identity-like part of the noise prediction at
/// high noise, where any absolute error of a bare MLP would be multiplied by
/// sigma_t / alpha_t in the implied clean-sample estimate.
Var denoise(const VarMap& params, Var z, std::span<const int> t, Var cond, const NoiseSchedule& schedule);
Var denoise(const VarMap& params, Var z, int t, Var cond, const NoiseSchedule& schedule);
/// The learned null conditioning repeated for `batch` rows.
Var null_condition(const VarMap& params, std::size_t batch);

/// Reads the architecture sizes back out of parameter shapes.
ModelDims infer_dims(const ParamSet& text, const ParamSet& denoiser);

}  // namespace rc
