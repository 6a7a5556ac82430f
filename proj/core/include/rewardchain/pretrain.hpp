#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rewardchain/bundle.hpp"
#include "rewardchain/optim.hpp"
#include "rewardchain/schedule.hpp"

namespace rc {

struct ClipPretrainConfig {
  int iterations = 3000;
  std::size_t batch = 32;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct DiffusionPretrainConfig {
  int iterations = 20000;
  std::size_t batch = 64;
  double lr = 2e-3;
  /// Learning rate decays linearly to lr * final_lr_fraction.
  double final_lr_fraction = 0.05;
  double weight_decay = 0.0;
  /// Probability of replacing a row's conditioning with the null vector.
  double null_prob = 0.1;
  std::uint64_t seed = 0;
};

struct LossPoint {
  int iter = 0;
  double loss = 0.0;
};

/// Symmetric cross-entropy over exp(logit_scale) * cos(T(p_i), I(x_j)).
Var clip_loss(const VarMap& text, const VarMap& image, std::span<const Prompt> prompts, Var x);

/// Trains text and image encoders (and the logit scale, clamped to
/// [0, ln 100]) in place. Prompts in a batch are distinct attribute sets.
std::vector<LossPoint> clip_pretrain(ParamSet& text, ParamSet& image, const ToyWorld& world,
                                     const ClipPretrainConfig& config);

/// Noise-prediction training of the denoiser under a frozen text encoder.
std::vector<LossPoint> diffusion_pretrain(ParamSet& denoiser, const ParamSet& text, const ToyWorld& world,
                                          const NoiseSchedule& schedule, const DiffusionPretrainConfig& config);

/// Mean squared noise-prediction error over `count` fresh pairs drawn for the
/// given prompts (cycled), at uniformly drawn timesteps.
double denoiser_mse(const ParamSet& denoiser, const ParamSet& text, const ToyWorld& world,
                    const NoiseSchedule& schedule, std::span<const Prompt> prompts, std::size_t count,
                    std::uint64_t seed);

struct ClipAgreement {
  double matched_mean = 0.0;     // mean cos(T(p), I(x_p))
  double mismatched_mean = 0.0;  // mean cos(T(p), I(x_q)), q != p
  double triple_accuracy = 0.0;  // fraction of (p, q) with matched > mismatched
};

/// Compares text and image embeddings over one noisy sample per prompt.
ClipAgreement clip_agreement(const ParamSet& text, const ParamSet& image, const ToyWorld& world,
                             std::span<const Prompt> prompts, std::uint64_t seed);

std::string loss_csv(const std::vector<LossPoint>& points);

}  // namespace rc
