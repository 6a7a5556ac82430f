#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rewardchain/world.hpp"

namespace rc {
namespace {

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(World, PatternsAreSeparatedAndDeterministic) {
  const WorldConfig cfg;
  const ToyWorld w = make_world(cfg, 11);
  ASSERT_EQ(w.attributes(), cfg.attributes);
  EXPECT_EQ(w.data_dim(), cfg.data_dim);
  for (std::size_t i = 0; i < w.attributes(); ++i) {
    for (std::size_t j = i + 1; j < w.attributes(); ++j) EXPECT_LT(cosine(w.patterns[i], w.patterns[j]), cfg.max_cosine);
  }
  const ToyWorld again = make_world(cfg, 11);
  for (std::size_t i = 0; i < w.attributes(); ++i) EXPECT_TRUE(w.patterns[i].bit_equal(again.patterns[i]));
  EXPECT_FALSE(make_world(cfg, 12).patterns[0].bit_equal(w.patterns[0]));
}

TEST(World, RejectsBadConfig) {
  WorldConfig cfg;
  cfg.attributes = 2;
  EXPECT_THROW(make_world(cfg, 0), std::invalid_argument);
  cfg.attributes = 40;
  EXPECT_THROW(make_world(cfg, 0), std::invalid_argument);
  cfg = WorldConfig{};
  cfg.noise_scale = -1.0;
  EXPECT_THROW(make_world(cfg, 0), std::invalid_argument);
}

TEST(World, ParamsRoundTrip) {
  const ToyWorld w = make_world(WorldConfig{}, 3);
  const ToyWorld back = world_from_params(world_to_params(w));
  ASSERT_EQ(back.attributes(), w.attributes());
  for (std::size_t i = 0; i < w.attributes(); ++i) EXPECT_TRUE(back.patterns[i].bit_equal(w.patterns[i]));
  EXPECT_TRUE(back.style.bit_equal(w.style));
  EXPECT_TRUE(back.collapse_point.bit_equal(w.collapse_point));
  EXPECT_EQ(back.noise_scale, w.noise_scale);
  EXPECT_THROW(world_from_params({}), std::invalid_argument);
}

TEST(World, PatternSumAndPromptChecks) {
  const ToyWorld w = make_world(WorldConfig{}, 3);
  const Tensor s = w.pattern_sum({0, 2});
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_EQ(s[i], round_f32(w.patterns[0][i] + w.patterns[2][i]));
  EXPECT_THROW(w.check_prompt({}), std::invalid_argument);
  EXPECT_THROW(w.check_prompt({8}), std::out_of_range);
  EXPECT_THROW(w.check_prompt({-1}), std::out_of_range);
}

TEST(World, SampledPromptsHoldOneToThreeDistinctAttributes) {
  const ToyWorld w = make_world(WorldConfig{}, 5);
  Rng rng(9);
  std::set<std::size_t> lengths;
  for (int i = 0; i < 500; ++i) {
    Prompt p = sample_prompt(w, rng);
    lengths.insert(p.size());
    w.check_prompt(p);
    std::sort(p.begin(), p.end());
    EXPECT_EQ(std::adjacent_find(p.begin(), p.end()), p.end());
  }
  EXPECT_EQ(lengths, (std::set<std::size_t>{1, 2, 3}));
}

TEST(World, PairsScatterAroundPatternSum) {
  const ToyWorld w = make_world(WorldConfig{}, 5);
  Rng rng(2);
  const PairBatch b = sample_pairs(w, rng, 400);
  double sq = 0.0;
  for (std::size_t r = 0; r < 400; ++r) {
    const Tensor mean = w.pattern_sum(b.prompts[r]);
    for (std::size_t i = 0; i < w.data_dim(); ++i) sq += (b.x.at(r, i) - mean[i]) * (b.x.at(r, i) - mean[i]);
  }
  const double sd = std::sqrt(sq / (400.0 * w.data_dim()));
  EXPECT_NEAR(sd, w.noise_scale, 0.01);
}

TEST(Prompts, ParseSkipsBlankLinesAndRecordsLineNumbers) {
  const PromptSet s = parse_prompts("0 3\n\n  5\r\n1 2 7\n", 32, Split::holdout);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.prompts[0], (Prompt{0, 3}));
  EXPECT_EQ(s.prompts[1], (Prompt{5}));
  EXPECT_EQ(s.lines, (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(s.split, Split::holdout);
  EXPECT_EQ(format_prompts(s), "0 3\n5\n1 2 7\n");
}

TEST(Prompts, ParseErrorsNameTheLine) {
  try {
    parse_prompts("1 2\n3 x\n", 32);
    FAIL() << "expected PromptFileError";
  } catch (const PromptFileError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_prompts("1 32\n", 32), PromptFileError);
  EXPECT_THROW(parse_prompts("-1\n", 32), PromptFileError);
  EXPECT_THROW(parse_prompts("1.5\n", 32), PromptFileError);
  EXPECT_THROW(parse_prompts("\n \n", 32), PromptFileError);
}

TEST(Prompts, SplitsPartitionAllCombinations) {
  const ToyWorld w = make_world(WorldConfig{}, 5);
  const PromptSplits s = make_prompt_splits(w, 4, 32);
  EXPECT_EQ(s.holdout.size(), 32u);
  EXPECT_EQ(s.train.size() + s.holdout.size(), 8u + 28u + 56u);
  std::set<Prompt> seen(s.train.prompts.begin(), s.train.prompts.end());
  for (const Prompt& p : s.holdout.prompts) EXPECT_TRUE(seen.insert(p).second);
  const PromptSplits again = make_prompt_splits(w, 4, 32);
  EXPECT_EQ(again.holdout.prompts, s.holdout.prompts);
  EXPECT_THROW(make_prompt_splits(w, 4, 0), std::invalid_argument);
  EXPECT_THROW(make_prompt_splits(w, 4, 92), std::invalid_argument);
}

}  // namespace
}  // namespace rc
