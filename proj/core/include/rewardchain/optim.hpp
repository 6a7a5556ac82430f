#pragma once

#include <cstdint>

#include "rewardchain/params.hpp"

namespace rc {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;
};

/// Decoupled-weight-decay Adam: p <- p * (1 - lr * wd), then the bias-corrected
/// moment step. Every parameter needs a gradient of its own shape. Parameters
/// listed in `params` but absent from the state are given zero moments.
void adamw_update(ParamSet& params, const ParamSet& grads, AdamWState& state, const AdamWConfig& config);

}  // namespace rc
