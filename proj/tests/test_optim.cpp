#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ssvc/conv.hpp"
#include "ssvc/optim.hpp"
#include "ssvc/random.hpp"

using namespace ssvc;

TEST(Adam, MatchesIndependentOracleOverSeveralSteps) {
  Rng rng(1);
  std::vector<double> w0(12);
  for (auto& v : w0) v = normal(rng);
  Tensord w({3, 4}, w0, true);
  Tensord b({4}, std::vector<double>(4, 0.1), true);
  AdamConfig cfg{1e-3, 0.5, 0.999, 1e-8};
  Adam<double> opt({w, b}, cfg);
  oracle::AdamOracle ow{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, {}, {}, 0};
  oracle::AdamOracle ob = ow;
  oracle::Vec ew = w0, eb(4, 0.1);
  for (int step = 0; step < 5; ++step) {
    Tensord x({2, 3}, {normal(rng), normal(rng), normal(rng), normal(rng), normal(rng), normal(rng)});
    opt.zero_grad();
    auto y = matmul(x, w) + reshape(b, {1, 4});
    auto loss = sum(y * y);
    loss.backward();
    oracle::Vec gw(w.grad().begin(), w.grad().end()), gb(b.grad().begin(), b.grad().end());
    opt.step();
    ew = ow.step(ew, gw);
    eb = ob.step(eb, gb);
    for (std::size_t i = 0; i < ew.size(); ++i) EXPECT_NEAR(w[i], ew[i], 1e-10);
    for (std::size_t i = 0; i < eb.size(); ++i) EXPECT_NEAR(b[i], eb[i], 1e-10);
  }
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(Adam, FirstStepMovesEachWeightByTheLearningRate) {
  Tensord w({3}, {1.0, -2.0, 0.5}, true);
  Adam<double> opt({w}, {0.01, 0.5, 0.999, 1e-8});
  sum(mul_scalar(w, 3.0) * Tensord({3}, {1.0, -1.0, 2.0})).backward();
  opt.step();
  // Bias-corrected m/sqrt(v) = sign(g) on step one.
  EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(w[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(w[2], 0.5 - 0.01, 1e-9);
}

TEST(Adam, ParametersWithoutGradientAreUntouched) {
  Tensord a({2}, {1.0, 2.0}, true), b({2}, {3.0, 4.0}, true);
  Adam<double> opt({a, b}, {});
  sum(a).backward();
  opt.step();
  EXPECT_EQ(b[0], 3.0);
  EXPECT_EQ(b[1], 4.0);
  EXPECT_NE(a[0], 1.0);
}

TEST(Adam, ZeroLearningRateFreezes) {
  Tensord a({2}, {1.0, 2.0}, true);
  Adam<double> opt({a}, {0.0, 0.5, 0.999, 1e-8});
  sum(a * a).backward();
  opt.step();
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(a[1], 2.0);
}

TEST(Adam, RejectsBadHyperParameters) {
  Tensord a({1}, {1.0}, true);
  EXPECT_THROW(Adam<double>({a}, {-1.0, 0.5, 0.999, 1e-8}), std::invalid_argument);
  EXPECT_THROW(Adam<double>({a}, {1e-3, 1.0, 0.999, 1e-8}), std::invalid_argument);
  EXPECT_THROW(Adam<double>({a}, {1e-3, 0.5, 1.0, 1e-8}), std::invalid_argument);
}
