#include "rewardchain/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rc {

void adamw_update(ParamSet& params, const ParamSet& grads, AdamWState& state, const AdamWConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw std::invalid_argument("missing gradient for trainable parameter '" + name + "'");
    if (g->second.shape() != p.shape()) throw std::invalid_argument("gradient shape mismatch for '" + name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double step_size = cfg.lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = round_f32(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i]);
      v[i] = round_f32(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i]);
      double x = p[i] * (1.0 - cfg.lr * cfg.weight_decay);
      x -= step_size * m[i] / (std::sqrt(v[i]) / bc2_sqrt + cfg.eps);
      p[i] = round_f32(x);
    }
  }
}

}  // namespace rc
