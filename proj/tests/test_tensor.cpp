#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ssvc/conv.hpp"
#include "ssvc/grad_check.hpp"
#include "ssvc/random.hpp"
#include "ssvc/tensor.hpp"

using namespace ssvc;

namespace {

constexpr double kGradTol = 1e-6;
constexpr double kEps = 1e-5;

Tensord rand_t(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensord(std::move(shape), std::move(v), grad);
}

// Reduces to a scalar with fixed random weights so every output element
// carries a distinct upstream gradient.
Tensord weighted_sum(const Tensord& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = rand_t(rng, y.shape(), -1.0, 1.0, false);
  return sum(y * w);
}

double check(std::function<Tensord()> f, std::vector<Tensord> params) {
  return grad_check_params<double>(f, params, kEps).max_rel_error;
}

}  // namespace

TEST(StopGradient, ForwardPassesValues) {
  Tensord t({2}, {1.5, -2.0}, true);
  auto s = stop_gradient(t);
  EXPECT_EQ(s[0], 1.5);
  EXPECT_EQ(s[1], -2.0);
}

TEST(StopGradient, SumOfStoppedHasZeroGradient) {
  Tensord z({3}, {1.0, 2.0, 3.0}, true);
  sum(stop_gradient(z)).backward();
  for (double g : z.grad_values()) EXPECT_EQ(g, 0.0);
}

TEST(StopGradient, DotWithStoppedBranch) {
  Tensord p({3}, {0.5, -1.0, 2.0}, true);
  Tensord z({3}, {3.0, 4.0, -5.0}, true);
  sum(p * stop_gradient(z)).backward();
  auto gp = p.grad_values();
  auto gz = z.grad_values();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(gp[i], z[i]);
    EXPECT_EQ(gz[i], 0.0);
  }
}

TEST(StopGradient, OnlyStoppedPathsGiveBitwiseZero) {
  Rng rng(1);
  auto x = rand_t(rng, {4, 3});
  auto a = stop_gradient(exp(x) * x);
  auto b = stop_gradient(sum(x, {1}, true));
  Tensord w = rand_t(rng, {4, 3});
  sum(a * w + b * w).backward();
  for (double g : x.grad_values()) {
    EXPECT_EQ(g, 0.0);
    EXPECT_FALSE(std::signbit(g));
  }
  EXPECT_TRUE(w.has_grad());
}

TEST(StopGradient, NeverChangesForwardValues) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = rand_t(rng, {3, 5});
    auto y1 = sigmoid(x * x + exp(x));
    auto y2 = sigmoid(stop_gradient(x) * x + exp(stop_gradient(x)));
    for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_EQ(y1[i], y2[i]);
  }
}

TEST(Backward, QuadraticGradient) {
  Tensord x({3}, {1.0, 2.0, 3.0}, true);
  sum(x * x).backward();
  auto g = x.grad_values();
  EXPECT_EQ(g, (std::vector<double>{2.0, 4.0, 6.0}));
}

TEST(Backward, MeanGradient) {
  Tensord x({4}, {1.0, -2.0, 3.0, 0.5}, true);
  mean(x).backward();
  for (double g : x.grad_values()) EXPECT_EQ(g, 0.25);
}

TEST(Backward, RandomThreeLayerCompositeMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = rand_t(rng, {4, 6});
    auto w1 = rand_t(rng, {6, 5});
    auto w2 = rand_t(rng, {5, 3});
    auto w3 = rand_t(rng, {3, 1});
    auto f = [&] {
      auto h1 = sigmoid(matmul(x, w1));
      auto h2 = leaky_relu(matmul(h1, w2), 0.2);
      return mean(exp(matmul(h2, w3)));
    };
    EXPECT_LT(check(f, {x, w1, w2, w3}), kGradTol);
  }
}

TEST(Backward, RejectsNonScalar) {
  Tensord x({2}, {1.0, 2.0}, true);
  EXPECT_THROW((x * x).backward(), shape_error);
}

TEST(Backward, LeafGradientsAccumulateUntilZeroed) {
  Tensord x({2}, {1.0, 2.0}, true);
  sum(x * x).backward();
  sum(x * x).backward();
  EXPECT_EQ(x.grad_values(), (std::vector<double>{4.0, 8.0}));
  x.zero_grad();
  sum(x * x).backward();
  EXPECT_EQ(x.grad_values(), (std::vector<double>{2.0, 4.0}));
}

TEST(Backward, EveryReachableLeafGetsAGradient) {
  Rng rng(4);
  auto a = rand_t(rng, {3});
  auto b = rand_t(rng, {3});
  auto unused_branch = rand_t(rng, {3});
  auto y = sum(a * b) + sum(unused_branch * 0.0);
  y.backward();
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_TRUE(unused_branch.has_grad());
}

TEST(Backward, NoTapeWithoutGradInputs) {
  Tensord x({2}, {1.0, 2.0});
  auto y = exp(x) + x;
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(GradCheck, L2NormAtThreeFour) {
  Tensord x0({2}, {3.0, 4.0});
  auto r = grad_check<double>([](const Tensord& x) { return sqrt(sum(x * x)); }, x0, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Tensord x0({3}, {1.0, 2.0, 3.0});
  auto r = grad_check<double>([](const Tensord& x) { return sum(x * 0.0) + Tensord::scalar(2.0); },
                              x0, 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, NonFiniteValueIsReportedDistinctly) {
  Tensord x0({2}, {-1.0, 2.0});
  EXPECT_THROW(grad_check<double>([](const Tensord& x) { return sum(log(x)); }, x0, 1e-5),
               non_finite_error);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A stop-gradient hides a real dependence, so the numeric and analytic
  // gradients disagree.
  Tensord x0({2}, {0.3, 0.7});
  auto r = grad_check<double>([](const Tensord& x) { return sum(stop_gradient(x) * x); }, x0, 1e-5);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradCheck, RestoresParameterValues) {
  Rng rng(5);
  auto x = rand_t(rng, {5});
  std::vector<double> before(x.values().begin(), x.values().end());
  grad_check_params<double>([&] { return sum(exp(x)); }, {x}, 1e-5);
  EXPECT_EQ(std::vector<double>(x.values().begin(), x.values().end()), before);
}

// Every primitive against central differences at random points.
TEST(Primitives, ElementwiseBinaryWithBroadcasting) {
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    auto a = rand_t(rng, {2, 3, 4});
    auto b = rand_t(rng, {3, 1});
    auto c = rand_t(rng, {1, 3, 4});
    auto d = rand_t(rng, {2, 3, 4}, 0.5, 2.0);
    auto e = rand_t(rng, {4});
    EXPECT_LT(check([&] { return weighted_sum(a + b); }, {a, b}), kGradTol);
    EXPECT_LT(check([&] { return weighted_sum(a - c); }, {a, c}), kGradTol);
    EXPECT_LT(check([&] { return weighted_sum(a * b); }, {a, b}), kGradTol);
    EXPECT_LT(check([&] { return weighted_sum(c / d); }, {c, d}), kGradTol);
    EXPECT_LT(check([&] { return weighted_sum(a * e); }, {a, e}), kGradTol);
    EXPECT_LT(check([&] { return weighted_sum(a + a); }, {a}), kGradTol);
  }
}

TEST(Primitives, PerChannelBroadcast) {
  Rng rng(7);
  auto x = rand_t(rng, {2, 4, 3, 5});
  auto bias = rand_t(rng, {1, 4, 1, 1});
  auto scale = rand_t(rng, {2, 4, 1, 1});
  EXPECT_LT(check([&] { return weighted_sum(x * scale + bias); }, {x, scale, bias}), kGradTol);
  auto y = x + bias;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 15; ++k) {
        const std::size_t i = (n * 4 + c) * 15 + k;
        EXPECT_EQ(y[i], x[i] + bias[c]);
      }
}

TEST(Primitives, ScalarOpsAndUnaryFunctions) {
  Rng rng(8);
  auto x = rand_t(rng, {3, 4});
  auto pos = rand_t(rng, {3, 4}, 0.2, 3.0);
  EXPECT_LT(check([&] { return weighted_sum(x * 2.5 + 1.0); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(-x - 0.5); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(exp(x)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(log(pos)); }, {pos}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(sqrt(pos)); }, {pos}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(sigmoid(x * 3.0)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(leaky_relu(x, 0.2)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(clamp(x, -2.0, 2.0)); }, {x}), kGradTol);
}

TEST(Primitives, ShapeOps) {
  Rng rng(9);
  auto x = rand_t(rng, {2, 6, 3});
  auto y = rand_t(rng, {2, 2, 3});
  EXPECT_LT(check([&] { return weighted_sum(reshape(x, {4, 9})); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(narrow(x, 1, 2, 3)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(concat<double>({x, y, x}, 1)); }, {x, y}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(index_select(x, 1, {0, 5, 5, 2})); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(glu(x, 1)); }, {x}), kGradTol);
}

TEST(Primitives, Reductions) {
  Rng rng(10);
  auto x = rand_t(rng, {2, 3, 4});
  EXPECT_LT(check([&] { return sum(x) * sum(x); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return mean(x) * mean(x); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(sum(x, {0, 2})); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(mean(x, {1}, true)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(std_dev(x, {2})); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(std_dev(x, {0, 1}, true)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(logsumexp(x)); }, {x}), kGradTol);
}

TEST(Primitives, NormalizationsAndMatrixOps) {
  Rng rng(11);
  auto x = rand_t(rng, {3, 5});
  auto w = rand_t(rng, {5, 2});
  auto f = rand_t(rng, {2, 3, 2, 4});
  EXPECT_LT(check([&] { return weighted_sum(l2_normalize(x)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(matmul(x, w)); }, {x, w}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(transpose(x)); }, {x}), kGradTol);
  EXPECT_LT(check([&] { return weighted_sum(instance_norm(f, 8, 1e-5)); }, {f}), kGradTol);
}

TEST(Reductions, StdIsPopulationStd) {
  Tensord x({1, 4}, {1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(std_dev(x, {1})[0], std::sqrt(1.25), 1e-15);
}

TEST(Reductions, StdGradientIsZeroOnConstantSlice) {
  Tensord x({1, 3}, {2.0, 2.0, 2.0}, true);
  sum(std_dev(x, {1})).backward();
  for (double g : x.grad_values()) EXPECT_EQ(g, 0.0);
}

TEST(Reductions, LogSumExpIsStableForLargeInputs) {
  Tensord x({2}, {1000.0, 1000.0});
  EXPECT_NEAR(logsumexp(x)[0], 1000.0 + std::log(2.0), 1e-9);
}

TEST(Elementwise, SigmoidIsFiniteAndBounded) {
  Tensord x({4}, {-800.0, -30.0, 30.0, 800.0});
  auto y = sigmoid(x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(std::isfinite(y[i]));
    EXPECT_GE(y[i], 0.0);
    EXPECT_LE(y[i], 1.0);
  }
}

TEST(Normalize, ZeroVectorIsAnError) {
  Tensord x({2, 2}, {1.0, 0.0, 0.0, 0.0});
  EXPECT_THROW(l2_normalize(x), zero_norm_error);
}

TEST(InstanceNorm, ConstantSliceIsExactlyZero) {
  Tensord x({2, 4}, {0.1, 0.1, 0.1, 0.1, 3.0, 3.0, 3.0, 3.0});
  auto y = instance_norm(x, 4, 1e-5);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Shapes, Errors) {
  Tensord a({2, 3}, std::vector<double>(6, 1.0));
  Tensord b({4}, std::vector<double>(4, 1.0));
  EXPECT_THROW(a + b, shape_error);
  EXPECT_THROW(reshape(a, {4, 2}), shape_error);
  EXPECT_THROW(Tensord({2, 0}, {}), shape_error);
  EXPECT_THROW(Tensord({2, 2}, {1.0}), shape_error);
  EXPECT_THROW(narrow(a, 1, 2, 2), shape_error);
  EXPECT_THROW(index_select(a, 0, {2}), shape_error);
  EXPECT_THROW(concat<double>({a, b}, 0), shape_error);
  EXPECT_THROW(glu(Tensord({3}, {1.0, 2.0, 3.0}), 0), shape_error);
}

TEST(Shapes, ReshapeSharesStorage) {
  Tensord a({2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = reshape(a, {3, 2});
  EXPECT_EQ(r.values().data(), a.values().data());
}

TEST(Leaves, MutableValuesOnlyOnLeaves) {
  Tensord a({2}, {1.0, 2.0}, true);
  auto b = a * 2.0;
  EXPECT_NO_THROW(a.mutable_values());
  EXPECT_THROW(b.mutable_values(), std::logic_error);
}

TEST(Float, SinglePrecisionGradientsAgree) {
  Tensorf x({3}, {0.5f, -1.0f, 2.0f}, true);
  sum(sigmoid(x) * x).backward();
  auto g = x.grad_values();
  for (std::size_t i = 0; i < 3; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-double(x[i])));
    EXPECT_NEAR(g[i], s + double(x[i]) * s * (1.0 - s), 1e-6);
  }
}
