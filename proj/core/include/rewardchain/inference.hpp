#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rewardchain/bundle.hpp"
#include "rewardchain/rewards.hpp"
#include "rewardchain/schedule.hpp"

namespace rc {

struct SamplerConfig {
  ScheduleKind schedule = ScheduleKind::cosine;
  int train_steps = 1000;
  SamplerKind sampler = SamplerKind::ddim;
  int n_steps = 25;
  /// Classifier-free guidance scale; 1 is plain conditional sampling.
  double guidance = 7.5;
  /// The fine-tuned encoder conditions the last this many steps, the base
  /// encoder the ones before. Values >= n_steps use it throughout.
  int finetuned_steps = 15;

  void validate() const;
};

/// z_T for `rows` samples of width `dim`, drawn from `seed`.
Tensor initial_noise(std::uint64_t seed, std::size_t rows, std::size_t dim);

/// [B, C] conditioning of a prompt batch.
Tensor encode_prompts(const ParamSet& text, std::span<const Prompt> prompts);

/// Per-step conditioning for an n-step chain: `base` for the first
/// n - finetuned_steps steps, `finetuned` for the rest.
std::vector<Tensor> staged_conditioning(const Tensor& base, const Tensor& finetuned, int n_steps,
                                        int finetuned_steps);

/// Runs the sampler from z_T. `conds` holds one [B, C] conditioning for all
/// steps or one per step.
Tensor sample_from_embeddings(const ParamSet& denoiser, std::span<const Tensor> conds, const Tensor& z_T,
                              const SamplerConfig& config);

/// Samples one row per prompt with the bundle's encoders (base_text early,
/// text late; text throughout when the bundle is a baseline).
Tensor sample_prompts(const ModelBundle& bundle, std::span<const Prompt> prompts, const Tensor& z_T,
                      const SamplerConfig& config);
/// Single prompt with z_T drawn from `seed` -> [1, D].
Tensor sample(const ModelBundle& bundle, const Prompt& prompt, std::uint64_t seed, const SamplerConfig& config);

/// (1 - lambda) * c_original + lambda * c_finetuned, lambda in [0, 1].
Tensor interpolate_embeddings(const Tensor& c_original, const Tensor& c_finetuned, double lambda);

struct WeightedEmbedding {
  Tensor embedding;
  double weight = 0.0;
};

/// Convex combination of at least two embeddings whose weights sum to 1.
Tensor mix_styles(std::span<const WeightedEmbedding> entries);

/// Sample written as little-endian f32 values (`<stem>.f32`) with a JSON
/// sidecar (`<stem>.json`).
struct SampleRecord {
  Prompt prompt;
  std::uint64_t seed = 0;
  Tensor x;
  RewardScores scores;
  /// Optional controls recorded in the sidecar.
  std::optional<double> lambda;
  std::vector<double> mix_weights;
  std::vector<std::string> mix_sources;
  SamplerConfig config;
};

void write_sample(const std::filesystem::path& stem, const SampleRecord& record);
std::string sample_sidecar_json(const SampleRecord& record);
/// Reads back the raw f32 payload written by write_sample.
std::vector<float> read_f32_file(const std::filesystem::path& path);

}  // namespace rc
