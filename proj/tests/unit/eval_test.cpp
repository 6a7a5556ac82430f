#include <gtest/gtest.h>

#include "rewardchain/eval.hpp"
#include "support/toy.hpp"

namespace rc {
namespace {

EvalConfig quick_eval() {
  EvalConfig e;
  e.sampler.n_steps = 4;
  e.sampler.finetuned_steps = 2;
  e.seeds = 2;
  return e;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.n_steps = 4;
  t.k_steps = 2;
  t.batch = 4;
  t.iterations = 2;
  return t;
}

TEST(Table, CsvAndAlignedText) {
  Table t;
  t.header = {"name", "value"};
  t.rows = {{"a", "1.000000"}, {"long_name", "2.5"}};
  EXPECT_EQ(t.csv(), "name,value\na,1.000000\nlong_name,2.5\n");
  EXPECT_EQ(t.text(),
            "     name     value\n"
            "-------------------\n"
            "        a  1.000000\n"
            "long_name       2.5\n");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
  EXPECT_EQ(format_number(-2.0), "-2.000000");
}

TEST(Diversity, ConstantSamplesHaveNone) {
  const Tensor x = Tensor::full({6, 4}, 0.7);
  EXPECT_EQ(diversity_of(x, 3, 2), 0.0);
  EXPECT_EQ(spread_of(x, 3, 2), 0.0);
}

TEST(Diversity, PairwiseDistancesBySeedBlock) {
  // Seed 0 rows: (0,0), (3,4); seed 1 rows: (0,0), (0,0).
  const Tensor x({4, 2}, {0, 0, 3, 4, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(diversity_of(x, 2, 2), (5.0 + 0.0) / 2.0);
  EXPECT_DOUBLE_EQ(spread_of(x, 2, 2), (0.0 + 5.0) / 2.0);
}

TEST(Evaluate, RequiresEnoughPromptsAndSeeds) {
  const ModelBundle b = testing::toy_bundle(71);
  const PromptSplits s = make_prompt_splits(b.world, 1, 32);
  const std::vector<Prompt> few(s.holdout.prompts.begin(), s.holdout.prompts.begin() + 10);
  EXPECT_THROW(evaluate(b, few, quick_eval(), 0), std::invalid_argument);
  EvalConfig one = quick_eval();
  one.seeds = 1;
  EXPECT_THROW(evaluate(b, s.holdout.prompts, one, 0), std::invalid_argument);
}

TEST(Evaluate, DeterministicAndConsistent) {
  const ModelBundle b = testing::toy_bundle(72);
  const PromptSplits s = make_prompt_splits(b.world, 1, 32);
  const EvalReport r = evaluate(b, s.holdout.prompts, quick_eval(), 3);
  EXPECT_EQ(r.prompts, 32u);
  EXPECT_EQ(r.seeds, 2);
  EXPECT_DOUBLE_EQ(r.combined, combined_reward(r.means, quick_eval().rewards));
  EXPECT_GT(r.diversity, 0.0);
  EXPECT_GT(r.spread, 0.0);
  const EvalReport again = evaluate(b, s.holdout.prompts, quick_eval(), 3);
  EXPECT_EQ(r.combined, again.combined);
  EXPECT_EQ(r.diversity, again.diversity);
  const std::pair<std::string, EvalReport> rows[1] = {{"m", r}};
  const Table t = report_table(rows);
  EXPECT_EQ(t.header.front(), "model");
  EXPECT_EQ(t.rows.front().size(), t.header.size());
}

TEST(Ablation, StepGridShapeAndOrder) {
  const ModelBundle b = testing::toy_bundle(73);
  const PromptSplits s = make_prompt_splits(b.world, 1, 32);
  const int ks[2] = {2, 1};
  const int ns[3] = {4, 1, 2};
  const Table t = ablate_steps(quick_train(), quick_eval(), b, s.train, s.holdout.prompts, ks, ns, 5);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.header[0], "train_k");
  EXPECT_EQ(t.header[1], "test_n");
  const char* expect[6][2] = {{"1", "1"}, {"1", "2"}, {"1", "4"}, {"2", "1"}, {"2", "2"}, {"2", "4"}};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(t.rows[i][0], expect[i][0]);
    EXPECT_EQ(t.rows[i][1], expect[i][1]);
  }
  EXPECT_EQ(ablate_steps(quick_train(), quick_eval(), b, s.train, s.holdout.prompts, ks, ns, 5).csv(), t.csv());
  const int too_big[1] = {5};
  EXPECT_THROW(ablate_steps(quick_train(), quick_eval(), b, s.train, s.holdout.prompts, ks, too_big, 5),
               std::invalid_argument);
  EXPECT_THROW(ablate_steps(quick_train(), quick_eval(), b, s.train, s.holdout.prompts, too_big, ns, 5),
               std::invalid_argument);
}

TEST(Ablation, SchedulerGridSharesNoise) {
  const ModelBundle b = testing::toy_bundle(74);
  const PromptSplits s = make_prompt_splits(b.world, 1, 32);
  const SamplerKind kinds[3] = {SamplerKind::euler, SamplerKind::ddim, SamplerKind::euler};
  const int steps[2] = {8, 4};
  const Table t = ablate_schedulers(quick_eval(), b, s.holdout.prompts, kinds, steps, 2);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0][0], "ddim");
  EXPECT_EQ(t.rows[0][1], "4");
  EXPECT_EQ(t.rows[0][2], "2");
  EXPECT_EQ(t.rows[1][1], "8");
  EXPECT_EQ(t.rows[1][2], "4");
  EXPECT_EQ(t.rows[3][0], "euler");
  EXPECT_EQ(ablate_schedulers(quick_eval(), b, s.holdout.prompts, kinds, steps, 2).csv(), t.csv());
}

TEST(Collapse, ReportLayout) {
  const ModelBundle b = testing::toy_bundle(75);
  const PromptSplits s = make_prompt_splits(b.world, 1, 32);
  const CollapseReport r = collapse_experiment(quick_train(), CollapseConfig{}, quick_eval(), b, s.train,
                                               s.holdout.prompts, 4);
  const Table t = r.table();
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0][0], "baseline");
  EXPECT_EQ(t.rows[0][1], "1.000000");
  EXPECT_EQ(t.rows[1][0], "no_constraint");
  EXPECT_EQ(t.rows[2][0], "constraint");
  EXPECT_EQ(params_hash(r.unconstrained_bundle.denoiser), params_hash(b.denoiser));
  CollapseConfig bad;
  bad.clip_weight = 0.0;
  EXPECT_THROW(collapse_experiment(quick_train(), bad, quick_eval(), b, s.train, s.holdout.prompts, 4),
               std::invalid_argument);
}

}  // namespace
}  // namespace rc
