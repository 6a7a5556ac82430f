#include <gtest/gtest.h>

#include "rewardchain/config.hpp"

namespace rc {
namespace {

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.train.n_steps, 25);
  EXPECT_EQ(c.train.k_steps, 5);
  EXPECT_EQ(c.train.iterations, 500);
  EXPECT_EQ(c.eval.sampler.guidance, 7.5);
  EXPECT_EQ(c.ablate_train_k, (std::vector<int>{5, 10, 15}));
  EXPECT_EQ(c.ablate_test_n, (std::vector<int>{5, 10, 15, 25}));
}

TEST(Config, ResolvedJsonRoundTrips) {
  const RunConfig c = parse_config(R"({"train": {"k_steps": 3, "sampler": "euler",
      "rewards": [{"kind": "collapse-probe", "weight": 2}]}, "eval": {"seeds": 3}})");
  EXPECT_EQ(c.train.k_steps, 3);
  EXPECT_EQ(c.train.sampler, SamplerKind::euler);
  ASSERT_EQ(c.train.rewards.terms.size(), 1u);
  EXPECT_EQ(c.train.rewards.terms[0].kind, RewardKind::collapse_probe);
  EXPECT_EQ(c.eval.rewards.terms.size(), 1u);
  const std::string once = config_json(c);
  EXPECT_EQ(config_json(parse_config(once)), once);
}

TEST(Config, EvalInheritsTrainingSchedule) {
  const RunConfig c = parse_config(R"({"train": {"schedule": "linear-beta", "train_steps": 500}})");
  EXPECT_EQ(c.eval.sampler.schedule, ScheduleKind::linear_beta);
  EXPECT_EQ(c.eval.sampler.train_steps, 500);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  const char* bad[] = {
      R"({"trian": {}})",
      R"({"train": {"k_step": 3}})",
      R"({"train": {"k_steps": "3"}})",
      R"({"train": {"k_steps": 2.5}})",
      R"({"train": {"batch": -1}})",
      R"({"train": {"checkpointing": 1}})",
      R"({"train": {"regime": "lora"}})",
      R"({"train": {"rewards": [{"weight": 1}]}})",
      R"({"train": {"rewards": [{"kind": "hps", "weight": 1}]}})",
      R"({"train": {"k_steps": 30}})",
      R"({"eval": {"finetuned_steps": 40}})",
      R"({"eval": {"seeds": 1}})",
      R"({"ablation": {"train_k": []}})",
      R"({"ablation": {"samplers": ["dpm"]}})",
      R"({"model": {"time_dim": 6}})",
      R"({"collapse": {"clip_weight": 0}})",
      R"([1, 2])",
      R"({"train": )",
  };
  for (const char* doc : bad) EXPECT_THROW(parse_config(doc), ConfigError) << doc;
}

TEST(Config, ErrorsNameTheKey) {
  try {
    parse_config(R"({"train": {"lr": "fast"}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/rewardchain.json"), ConfigError); }

}  // namespace
}  // namespace rc
