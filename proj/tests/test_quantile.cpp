#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "aqr/quantile.hpp"

using aqr::CheckLossProblem;

namespace {

struct Generator {
  std::mt19937_64 rng;
  explicit Generator(std::uint64_t seed) : rng(seed) {}

  CheckLossProblem problem() {
    std::uniform_int_distribution<int> size(1, 30);
    std::uniform_real_distribution<double> value(-10.0, 10.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int m = size(rng);
    std::vector<double> r(m), w(m);
    for (int i = 0; i < m; ++i) {
      // Ties and zero weights appear with moderate frequency.
      r[i] = unit(rng) < 0.2 && i > 0 ? r[i - 1] : std::round(value(rng) * 4.0) / 4.0;
      w[i] = unit(rng) < 0.15 ? 0.0 : unit(rng);
    }
    w[0] = std::max(w[0], 0.01);
    const double alpha = 0.01 + 0.98 * unit(rng);
    return CheckLossProblem(r, w, alpha);
  }
};

// Exhaustive oracle: smallest candidate residual minimizing the objective.
double exhaustive_argmin(const CheckLossProblem& p) {
  std::vector<double> cand(p.residuals().begin(), p.residuals().end());
  std::sort(cand.begin(), cand.end());
  double arg = cand.front();
  double best = aqr::check_objective(arg, p);
  for (double c : cand) {
    const double v = aqr::check_objective(c, p);
    if (v < best - 1e-12 * std::max(1.0, best)) {
      best = v;
      arg = c;
    }
  }
  return arg;
}

}  // namespace

TEST(CheckLoss, Values) {
  EXPECT_DOUBLE_EQ(aqr::check_loss(4.0, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(aqr::check_loss(1.0, 0.2), 0.2);
  EXPECT_DOUBLE_EQ(aqr::check_loss(-1.0, 0.2), 0.8);
  EXPECT_DOUBLE_EQ(aqr::check_loss(0.0, 0.7), 0.0);
  EXPECT_THROW(aqr::check_level(0.0), std::domain_error);
  EXPECT_THROW(aqr::check_level(1.0), std::domain_error);
}

TEST(WeightedQuantile, Examples) {
  EXPECT_EQ(aqr::weighted_quantile(CheckLossProblem({1, 2, 3}, {1, 1, 1}, 0.5)), 2.0);
  EXPECT_EQ(aqr::weighted_quantile(CheckLossProblem({5}, {0.3}, 0.9)), 5.0);

  const CheckLossProblem p({0, 10}, {0.2, 0.8}, 0.5);
  EXPECT_EQ(aqr::weighted_quantile(p), 10.0);
  EXPECT_DOUBLE_EQ(aqr::check_objective(10.0, p), 1.0);
  EXPECT_DOUBLE_EQ(aqr::check_objective(0.0, p), 4.0);
  double grid_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 10000; ++k) grid_min = std::min(grid_min, aqr::check_objective(k * 1e-3, p));
  EXPECT_NEAR(grid_min, 1.0, 1e-12);

  const CheckLossProblem c({3, 3, 3}, {1, 2, 3}, 0.3);
  EXPECT_EQ(aqr::check_objective(3.0, c), 0.0);
}

TEST(WeightedQuantile, Errors) {
  EXPECT_THROW(CheckLossProblem({}, {}, 0.5), std::invalid_argument);
  EXPECT_THROW(CheckLossProblem({1, 2}, {1}, 0.5), std::invalid_argument);
  EXPECT_THROW(CheckLossProblem({1, 2}, {0, 0}, 0.5), std::invalid_argument);
  EXPECT_THROW(CheckLossProblem({1, 2}, {1, -1}, 0.5), std::invalid_argument);
  EXPECT_THROW(CheckLossProblem({1, 2}, {1, 1}, 1.5), std::domain_error);
}

TEST(WeightedQuantile, MatchesExhaustiveOracle) {
  Generator gen(101);
  for (int t = 0; t < 1000; ++t) {
    const auto p = gen.problem();
    const double theta = aqr::weighted_quantile(p);
    EXPECT_EQ(theta, exhaustive_argmin(p)) << "instance " << t;
    EXPECT_NE(std::find(p.residuals().begin(), p.residuals().end(), theta), p.residuals().end());
  }
}

TEST(WeightedQuantile, OptimalityOverThetaGrid) {
  Generator gen(102);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto p = gen.problem();
    const double value = aqr::check_objective(aqr::weighted_quantile(p), p);
    const auto [lo, hi] = std::minmax_element(p.residuals().begin(), p.residuals().end());
    for (int k = 0; k < 1000; ++k) {
      const double theta = *lo + (*hi - *lo) * unit(gen.rng);
      EXPECT_LE(value, aqr::check_objective(theta, p) + 1e-12);
    }
  }
}

TEST(WeightedQuantile, EquivarianceProperty) {
  Generator gen(103);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int t = 0; t < 500; ++t) {
    const auto p = gen.problem();
    const double c = std::round(shift(gen.rng) * 8.0) / 8.0;  // exact in binary
    const double theta = aqr::weighted_quantile(p);
    std::vector<double> r(p.residuals().begin(), p.residuals().end());
    for (double& v : r) v += c;
    std::vector<double> w(p.weights().begin(), p.weights().end());
    EXPECT_EQ(aqr::weighted_quantile(CheckLossProblem(r, w, p.alpha())), theta + c);
    const double lambda = std::ldexp(1.0, static_cast<int>(scale(gen.rng)) - 3);  // power of two
    for (double& v : w) v *= lambda;
    std::vector<double> r0(p.residuals().begin(), p.residuals().end());
    EXPECT_EQ(aqr::weighted_quantile(CheckLossProblem(r0, w, p.alpha())), theta);
  }
}

TEST(WeightedQuantile, MonotoneInAlphaProperty) {
  Generator gen(104);
  for (int t = 0; t < 500; ++t) {
    const auto p = gen.problem();
    std::vector<double> r(p.residuals().begin(), p.residuals().end());
    std::vector<double> w(p.weights().begin(), p.weights().end());
    double previous = -std::numeric_limits<double>::infinity();
    for (int k = 1; k < 100; ++k) {
      const double q = aqr::weighted_quantile(CheckLossProblem(r, w, k / 100.0));
      EXPECT_GE(q, previous);
      previous = q;
    }
  }
}

TEST(WeightedQuantile, UnitWeightMedianProperty) {
  std::mt19937_64 rng(105);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 200; ++t) {
    const int m = 2 * (t % 15) + 1;
    std::vector<double> r(m);
    for (double& v : r) v = normal(rng);
    const double q = aqr::weighted_quantile(CheckLossProblem(r, std::vector<double>(m, 1.0), 0.5));
    std::nth_element(r.begin(), r.begin() + m / 2, r.end());
    EXPECT_EQ(q, r[m / 2]);
  }
}
