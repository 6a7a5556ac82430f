#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rewardchain/tensor.hpp"

namespace rc {
namespace {

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_EQ(shape_str(t.shape()), "[2,3]");
}

TEST(Tensor, ScalarAndRankOne) {
  Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.item(), 2.5);
  Tensor v({4});
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 4u);
  EXPECT_THROW((void)v.item(), std::invalid_argument);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({0, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3});
  EXPECT_THROW((void)t.reshaped({4}), std::invalid_argument);
  EXPECT_THROW((void)t.row(2), std::out_of_range);
  EXPECT_THROW((void)Tensor({2, 2, 2}).rows(), std::invalid_argument);
}

TEST(Tensor, RoundToF32MatchesFloatCast) {
  Tensor t({3}, {0.1, 1.0 / 3.0, 1e10 + 1.0});
  t.round_to(Precision::f32);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t[i], static_cast<double>(static_cast<float>(t[i])));
  EXPECT_EQ(t[0], static_cast<double>(0.1f));
  Tensor u({1}, {0.1});
  u.round_to(Precision::f64);
  EXPECT_EQ(u[0], 0.1);
}

TEST(Tensor, BitEqualDistinguishesSignedZeroAndShape) {
  Tensor a({2}, {0.0, 1.0});
  Tensor b({2}, {-0.0, 1.0});
  EXPECT_TRUE(a.bit_equal(a));
  EXPECT_FALSE(a.bit_equal(b));
  EXPECT_FALSE(a.bit_equal(a.reshaped({1, 2})));
}

TEST(Tensor, FiniteCheckAndNorms) {
  Tensor t({2}, {3.0, -4.0});
  EXPECT_TRUE(t.all_finite());
  EXPECT_DOUBLE_EQ(l2_norm(t), 5.0);
  EXPECT_DOUBLE_EQ(max_abs(t), 4.0);
  t[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, FloatRoundTrip) {
  Tensor t({2, 2}, {0.5, -1.25, 3.0, 1e-3});
  t.round_to(Precision::f32);
  const auto f = t.to_floats();
  EXPECT_TRUE(Tensor::from_floats({2, 2}, f).bit_equal(t));
}

}  // namespace
}  // namespace rc
