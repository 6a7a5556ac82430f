#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "rewardchain/ops.hpp"
#include "rewardchain/rng.hpp"
#include "rewardchain/tape.hpp"
#include "support/toy.hpp"

namespace rc {
namespace {

using Builder = std::function<Var(Tape&, std::span<const Var>)>;

struct OpCase {
  std::string name;
  std::vector<Shape> inputs;
  Builder build;
};

// Projects the op output onto a fixed random direction so every output
// element contributes to the scalar being differentiated.
Var project(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = rng.normal_tensor(out.shape());
  if (out.value().rank() == 0) return ops::mul(out, tape.constant(w));
  return ops::sum(ops::mul(out, tape.constant(w)));
}

std::vector<Tensor> random_inputs(const std::vector<Shape>& shapes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (const Shape& s : shapes) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.5, 1.5);
    out.push_back(t);
  }
  return out;
}

std::vector<OpCase> op_cases() {
  const int labels[3] = {2, 0, 3};
  const int ids[4] = {1, 3, 1, 0};
  return {
      {"add", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return ops::add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return ops::sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return ops::mul(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](Tape&, std::span<const Var> v) { return ops::scale(v[0], -0.7); }},
      {"axpby", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return ops::axpby(v[0], v[1], 0.3, -1.9); }},
      {"axpby_rows",
       {{3, 4}, {3, 4}},
       [](Tape&, std::span<const Var> v) {
         const double a[3] = {0.5, 1.5, -2.0}, b[3] = {1.0, -0.25, 0.75};
         return ops::axpby_rows(v[0], v[1], a, b);
       }},
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, std::span<const Var> v) { return ops::matmul(v[0], v[1]); }},
      {"linear",
       {{3, 4}, {4, 5}, {5}},
       [](Tape&, std::span<const Var> v) { return ops::linear(v[0], v[1], v[2]); }},
      {"concat_rows",
       {{2, 3}, {1, 3}},
       [](Tape&, std::span<const Var> v) {
         const Var p[2] = {v[0], v[1]};
         return ops::concat_rows(p);
       }},
      {"concat_cols",
       {{2, 3}, {2, 1}},
       [](Tape&, std::span<const Var> v) {
         const Var p[2] = {v[0], v[1]};
         return ops::concat_cols(p);
       }},
      {"slice_rows", {{4, 3}}, [](Tape&, std::span<const Var> v) { return ops::slice_rows(v[0], 1, 3); }},
      {"slice_cols", {{3, 5}}, [](Tape&, std::span<const Var> v) { return ops::slice_cols(v[0], 2, 5); }},
      {"gather_rows", {{4, 3}}, [ids](Tape&, std::span<const Var> v) { return ops::gather_rows(v[0], ids); }},
      {"mean_rows", {{4, 3}}, [](Tape&, std::span<const Var> v) { return ops::mean_rows(v[0]); }},
      {"repeat_rows", {{1, 3}}, [](Tape&, std::span<const Var> v) { return ops::repeat_rows(v[0], 3); }},
      {"transpose", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::transpose(v[0]); }},
      {"reshape", {{2, 6}}, [](Tape&, std::span<const Var> v) { return ops::reshape(v[0], {3, 4}); }},
      {"sum", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::sum(v[0]); }},
      {"mean", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::mean(v[0]); }},
      {"dot", {{5}, {5}}, [](Tape&, std::span<const Var> v) { return ops::dot(v[0], v[1]); }},
      {"sum_squares", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::sum_squares(v[0]); }},
      {"squared_error", {{2, 3}, {2, 3}}, [](Tape&, std::span<const Var> v) { return ops::squared_error(v[0], v[1]); }},
      {"tanh", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::tanh(v[0]); }},
      {"silu", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::silu(v[0]); }},
      {"exp", {{2, 3}}, [](Tape&, std::span<const Var> v) { return ops::exp(v[0]); }},
      {"mul_scalar", {{2, 3}, {}}, [](Tape&, std::span<const Var> v) { return ops::mul_scalar(v[0], v[1]); }},
      {"row_norm", {{3, 4}}, [](Tape&, std::span<const Var> v) { return ops::row_norm(v[0]); }},
      {"cosine_rows", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return ops::cosine_rows(v[0], v[1]); }},
      {"normalize_rows", {{3, 4}}, [](Tape&, std::span<const Var> v) { return ops::normalize_rows(v[0]); }},
      {"cross_entropy",
       {{3, 4}},
       [labels](Tape&, std::span<const Var> v) { return ops::cross_entropy(v[0], labels); }},
      {"composite",
       {{3, 4}, {4, 4}},
       [](Tape&, std::span<const Var> v) {
         Var h = ops::silu(ops::matmul(v[0], v[1]));
         return ops::cosine_rows(ops::tanh(h), v[0]);
       }},
  };
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase c = op_cases()[GetParam()];
  const std::vector<Tensor> inputs = random_inputs(c.inputs, 17 + GetParam());
  auto evaluate = [&](std::span<const Tensor> xs) {
    Tape tape(Precision::f64);
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.leaf(x, false));
    return project(tape, c.build(tape, vars), 5).value().item();
  };
  Tape tape(Precision::f64);
  std::vector<Var> vars;
  for (const Tensor& x : inputs) vars.push_back(tape.leaf(x, true));
  GradMap grads = tape.backward(project(tape, c.build(tape, vars), 5));
  const auto fd = testing::central_differences(evaluate, inputs, 1e-6);
  for (std::size_t k = 0; k < vars.size(); ++k) {
    EXPECT_LT(testing::relative_error(grads.at(vars[k].id()), fd[k]), 1e-6) << c.name << " input " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return op_cases()[info.param].name; });

TEST(Tape, F32TapeRoundsEveryValue) {
  Tape tape(Precision::f32);
  Var a = tape.leaf(Tensor({2}, {0.1, 0.2}), true);
  Var b = ops::scale(a, 1.0 / 3.0);
  for (double v : b.value().data()) EXPECT_EQ(v, round_f32(v));
  EXPECT_EQ(a.value()[0], round_f32(0.1));
}

TEST(Tape, BackwardNeedsScalarLoss) {
  Tape tape;
  Var a = tape.leaf(Tensor({2}), true);
  EXPECT_THROW(tape.backward(a), std::invalid_argument);
}

TEST(Tape, MixedTapesAreRejected) {
  Tape t1, t2;
  Var a = t1.leaf(Tensor({2}), true);
  Var b = t2.leaf(Tensor({2}), true);
  EXPECT_THROW(ops::add(a, b), std::invalid_argument);
  EXPECT_THROW(t1.backward(ops::sum(b)), std::invalid_argument);
}

TEST(Tape, ConstantsGetNoGradientAndUnusedLeavesGetZero) {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, {1, 2}), true);
  Var unused = tape.leaf(Tensor({3}, {1, 2, 3}), true);
  Var c = tape.constant(Tensor({2}, {3, 4}));
  GradMap g = tape.backward(ops::dot(a, c));
  EXPECT_EQ(g.count(c.id()), 0u);
  EXPECT_EQ(g.at(a.id())[0], 3.0);
  EXPECT_EQ(g.at(unused.id()).numel(), 3u);
  EXPECT_EQ(l2_norm(g.at(unused.id())), 0.0);
}

TEST(Tape, DetachBlocksGradient) {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, {1, 2}), true);
  GradMap g = tape.backward(ops::dot(a, ops::detach(a)));
  EXPECT_EQ(g.at(a.id())[0], 1.0);
  EXPECT_EQ(g.at(a.id())[1], 2.0);
}

TEST(Tape, DebugModeRaisesOnNonFinite) {
  Tape tape;
  tape.set_debug(true);
  Var a = tape.leaf(Tensor({1}, {1000.0}), true);
  EXPECT_THROW(ops::exp(a), NonFiniteError);
}

TEST(Tape, FiniteDiffHelperAgreesWithTestOracle) {
  auto f = [](std::span<const Tensor> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p[0].numel(); ++i) s += std::sin(p[0][i]) * (i + 1);
    return Tensor::scalar(s);
  };
  const Tensor x({3}, {0.1, -0.4, 1.2});
  const Tensor params[1] = {x};
  const auto lib = finite_diff_grad(f, params, 1e-5);
  const auto ref = testing::central_differences([&](std::span<const Tensor> p) { return f(p).item(); }, params, 1e-5);
  EXPECT_LT(testing::relative_error(lib[0], ref[0]), 1e-12);
  EXPECT_THROW(finite_diff_grad(f, params, 0.0), std::invalid_argument);
}

// A small MLP step used to compare checkpointed and plain recording.
std::vector<Var> mlp_step(std::span<const Var> in) {
  Var h = ops::silu(ops::linear(in[0], in[1], in[2]));
  return {ops::add(in[0], ops::scale(ops::tanh(ops::matmul(h, in[3])), 0.5))};
}

struct ChainGrads {
  std::vector<Tensor> grads;
  std::size_t peak_interior = 0;
};

ChainGrads mlp_chain(int steps, bool checkpoint) {
  Rng rng(3);
  Tape tape;
  Var x = tape.leaf(rng.normal_tensor({4, 6}), true);
  Var w1 = tape.leaf(rng.normal_tensor({6, 10}), true);
  Var b1 = tape.leaf(rng.normal_tensor({10}), true);
  Var w2 = tape.leaf(rng.normal_tensor({10, 6}), true);
  tape.reset_meter_peaks();
  Var z = x;
  for (int i = 0; i < steps; ++i) {
    const Var in[4] = {z, w1, b1, w2};
    z = checkpoint ? checkpoint_segment(tape, mlp_step, in).front() : mlp_step(in).front();
  }
  GradMap g = tape.backward(ops::sum_squares(z));
  ChainGrads out;
  for (Var v : {x, w1, b1, w2}) out.grads.push_back(g.at(v.id()));
  out.peak_interior = tape.meter().peak_interior;
  return out;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

TEST(Checkpoint, GradientsBitIdenticalToPlainTape) {
  for (int steps : {1, 2, 5, 8}) {
    const ChainGrads plain = mlp_chain(steps, false);
    const ChainGrads ckpt = mlp_chain(steps, true);
    for (std::size_t k = 0; k < plain.grads.size(); ++k) {
      EXPECT_TRUE(same_bits(plain.grads[k], ckpt.grads[k])) << "steps " << steps << " param " << k;
    }
  }
}

TEST(Checkpoint, InteriorPeakDoesNotGrowWithSteps) {
  const std::size_t one = mlp_chain(1, true).peak_interior;
  EXPECT_GT(one, 0u);
  EXPECT_EQ(mlp_chain(8, true).peak_interior, one);
  EXPECT_GT(mlp_chain(8, false).peak_interior, one);
}

TEST(Checkpoint, ImpureSegmentIsDetected) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}), true);
  int calls = 0;
  SegmentFn fn = [&calls](std::span<const Var> in) { return std::vector<Var>{ops::scale(in[0], ++calls)}; };
  const Var in[1] = {x};
  Var y = checkpoint_segment(tape, fn, in).front();
  EXPECT_THROW(tape.backward(ops::sum(y)), std::runtime_error);
}

TEST(Checkpoint, ConstantInputsYieldConstantOutputs) {
  Tape tape;
  Var x = tape.constant(Tensor({2}, {1, 2}));
  const Var in[1] = {x};
  Var y = checkpoint_segment(tape, [](std::span<const Var> v) { return std::vector<Var>{ops::tanh(v[0])}; }, in)
              .front();
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace rc
