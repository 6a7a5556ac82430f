#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rewardchain/models.hpp"
#include "rewardchain/params.hpp"
#include "rewardchain/rng.hpp"

namespace rc {

struct WorldConfig {
  std::size_t attributes = 8;
  std::size_t data_dim = 16;
  std::size_t vocab = 32;
  double pattern_scale = 0.5;
  double noise_scale = 0.15;
  /// Upper bound on the pairwise cosine similarity between patterns.
  double max_cosine = 0.5;
};

/// Synthetic prompt -> data distribution. Attribute k is spelled by token k;
/// a prompt's data are the sum of its attribute patterns plus isotropic noise.
struct ToyWorld {
  std::vector<Tensor> patterns;  // one [D] vector per attribute
  Tensor style;                  // target of the image-only reward
  Tensor collapse_point;         // target of the collapse probe
  double noise_scale = 0.0;

  std::size_t attributes() const { return patterns.size(); }
  std::size_t data_dim() const { return patterns.empty() ? 0 : patterns.front().numel(); }
  /// Throws unless every token names an attribute.
  void check_prompt(const Prompt& prompt) const;
  /// Sum of the prompt's attribute patterns: the noise-free data point.
  Tensor pattern_sum(const Prompt& prompt) const;
};

ToyWorld make_world(const WorldConfig& config, std::uint64_t seed);

/// world/pattern_k, world/style, world/collapse_point, world/noise_scale.
ParamSet world_to_params(const ToyWorld& world);
ToyWorld world_from_params(const ParamSet& params);

/// 1-3 distinct attributes in random order.
Prompt sample_prompt(const ToyWorld& world, Rng& rng);

struct Pair {
  Tensor x;
  Prompt prompt;
};
Pair sample_pair(const ToyWorld& world, Rng& rng);

struct PairBatch {
  Tensor x;  // [n, D]
  std::vector<Prompt> prompts;
};
PairBatch sample_pairs(const ToyWorld& world, Rng& rng, std::size_t n);

enum class Split { train, holdout };

struct PromptSet {
  Split split = Split::train;
  std::vector<Prompt> prompts;
  /// Source line of each prompt (1-based), or 0 for generated sets.
  std::vector<std::size_t> lines;

  std::size_t size() const { return prompts.size(); }
  bool empty() const { return prompts.empty(); }
};

class PromptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One prompt per line, whitespace-separated integer tokens in [0, vocab).
/// Blank lines are skipped.
PromptSet parse_prompts(const std::string& text, std::size_t vocab, Split split = Split::train);
PromptSet load_prompts(const std::filesystem::path& path, std::size_t vocab, Split split = Split::train);
std::string format_prompts(const PromptSet& set);
void save_prompts(const PromptSet& set, const std::filesystem::path& path);

/// Every attribute set of size 1-3 (tokens ascending), shuffled and divided
/// into disjoint train and holdout sets.
struct PromptSplits {
  PromptSet train;
  PromptSet holdout;
};
PromptSplits make_prompt_splits(const ToyWorld& world, std::uint64_t seed, std::size_t holdout_count = 32);

}  // namespace rc
