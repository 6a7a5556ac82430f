#include <gtest/gtest.h>

#include <cmath>

#include "rewardchain/optim.hpp"

namespace rc {
namespace {

std::vector<double> trajectory(double p0, std::vector<double> grads, double lr, double wd) {
  ParamSet p;
  p.emplace("w", Tensor({1}, {p0}));
  AdamWState state;
  const AdamWConfig cfg{lr, 0.9, 0.999, 1e-8, wd};
  std::vector<double> out;
  for (double g : grads) {
    ParamSet gs;
    gs.emplace("w", Tensor({1}, {g}));
    adamw_update(p, gs, state, cfg);
    out.push_back(p.at("w")[0]);
  }
  return out;
}

// Frozen from tests/oracles/schedule_oracle.py.
TEST(AdamW, TrajectoriesMatchOracle) {
  const auto a = trajectory(0.5, {0.1, -0.2, 0.3}, 1e-2, 1e-2);
  const double a_ref[] = {0.489950001, 0.493562043, 0.490080267};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], a_ref[i], 1e-8) << i;
  const auto b = trajectory(-1.25, {2.0, 2.0, 2.0}, 1e-3, 0.0);
  const double b_ref[] = {-1.25100005, -1.25200009, -1.25300014};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b[i], b_ref[i], 1e-8) << i;
}

TEST(AdamW, ZeroLearningRateLeavesParametersBitIdentical) {
  ParamSet p;
  p.emplace("w", Tensor({3}, {0.1, -2.0, 7.5}));
  for (double& v : p.at("w").data()) v = round_f32(v);
  const ParamSet before = p;
  ParamSet g;
  g.emplace("w", Tensor({3}, {1.0, -1.0, 0.5}));
  AdamWState state;
  for (int i = 0; i < 5; ++i) adamw_update(p, g, state, AdamWConfig{0.0, 0.9, 0.999, 1e-8, 0.1});
  EXPECT_EQ(params_hash(p), params_hash(before));
  EXPECT_EQ(state.step, 5u);
}

TEST(AdamW, StateAndParametersStayFloat32) {
  ParamSet p;
  p.emplace("w", Tensor({2}, {0.3, 0.7}));
  ParamSet g;
  g.emplace("w", Tensor({2}, {0.123456789, -9.87654321}));
  AdamWState state;
  adamw_update(p, g, state, AdamWConfig{});
  for (const Tensor* t : {&p.at("w"), &state.m.at("w"), &state.v.at("w")}) {
    for (double v : t->data()) EXPECT_EQ(v, round_f32(v));
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * sign(g) up to eps.
  const auto a = trajectory(0.0, {1e-3}, 1e-2, 0.0);
  EXPECT_NEAR(a[0], -1e-2, 1e-7);
}

TEST(AdamW, RejectsMissingOrMisshapenGradients) {
  ParamSet p;
  p.emplace("w", Tensor({2}));
  AdamWState state;
  EXPECT_THROW(adamw_update(p, {}, state, AdamWConfig{}), std::invalid_argument);
  ParamSet g;
  g.emplace("w", Tensor({3}));
  EXPECT_THROW(adamw_update(p, g, state, AdamWConfig{}), std::invalid_argument);
  g.clear();
  g.emplace("w", Tensor({2}));
  EXPECT_THROW(adamw_update(p, g, state, AdamWConfig{-1.0}), std::invalid_argument);
  EXPECT_EQ(state.step, 0u);
}

}  // namespace
}  // namespace rc
