#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewardchain/eval.hpp"
#include "rewardchain/pretrain.hpp"

namespace rc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run can be configured with. Seeds are not part of it;
/// they come from the command line.
struct RunConfig {
  WorldConfig world;
  ModelDims dims;
  ClipPretrainConfig clip;
  DiffusionPretrainConfig diffusion;
  TrainConfig train;
  EvalConfig eval;
  CollapseConfig collapse;
  std::vector<int> ablate_train_k = {5, 10, 15};
  std::vector<int> ablate_test_n = {5, 10, 15, 25};
  std::vector<SamplerKind> ablate_samplers = {SamplerKind::ddim, SamplerKind::euler};
  std::vector<int> ablate_sampler_steps = {25, 50};

  /// Throws ConfigError on any invariant violation.
  void validate() const;
};

/// Parses a JSON document. Sections and keys are optional; unknown ones are
/// rejected. The eval sampler inherits the training schedule.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Fully resolved configuration, parseable by parse_config.
std::string config_json(const RunConfig& config);

}  // namespace rc
