#include <cmath>
#include <iostream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "aqr/backfit.hpp"
#include "test_support.hpp"

using aqr::Dataset;
using aqr::FitConfig;
using aqr::Method;
using testing_support::interior_dataset;
using testing_support::max_abs;
using testing_support::sim_dataset;

namespace {

constexpr Method kQuantileMethods[] = {Method::bf, Method::sbf_grid, Method::sbf_pseudo};

void expect_centered(const aqr::AdditiveFit& fit) {
  for (std::size_t j = 0; j < fit.dimension(); ++j) {
    std::vector<double> prod(fit.grids[j].size());
    for (std::size_t g = 0; g < prod.size(); ++g) prod[g] = fit.components[j][g] * fit.weight_curves[j][g];
    EXPECT_LE(std::abs(aqr::trapezoid(fit.grids[j], prod)), 1e-8 * std::max(max_abs(fit.components[j]), 1e-300))
        << aqr::to_string(fit.method) << " component " << j;
  }
}

}  // namespace

TEST(Backfit, ConstantData) {
  Dataset data = sim_dataset(60, 1);
  for (double& y : data.y) y = 2.5;
  for (Method m : kQuantileMethods) {
    const std::vector<double> h(3, 0.5);
    const auto fit = aqr::fit_quantile(m, data, 0.3, h);
    EXPECT_EQ(fit.m0, 2.5) << aqr::to_string(m);
    for (const auto& c : fit.components)
      for (double v : c) EXPECT_EQ(v, 0.0);
    EXPECT_TRUE(fit.converged);
    EXPECT_LE(fit.iterations_run, 2);
  }
}

TEST(Backfit, SingleComponentMatchesDirectQuantile) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::normal_distribution<double> noise;
  Dataset data;
  const std::size_t n = 150;
  data.x = aqr::Matrix(n, 1);
  data.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.x(i, 0) = coord(rng);
    data.y[i] = std::cos(3.0 * data.x(i, 0)) + noise(rng);
  }
  data.intervals = {{-1.0, 1.0}};
  const std::vector<double> h{0.3};
  const aqr::KernelSpec k(0.3, {-1.0, 1.0});
  for (double alpha : {0.25, 0.5, 0.9}) {
    for (Method m : {Method::bf, Method::sbf_grid}) {
      const auto fit = aqr::fit_quantile(m, data, alpha, h);
      for (std::size_t g = 0; g < fit.grids[0].size(); ++g) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = k(fit.grids[0][g], data.x(i, 0));
        const double direct = aqr::weighted_quantile(aqr::CheckLossProblem(data.y, w, alpha));
        EXPECT_NEAR(fit.m0 + fit.components[0][g], direct, 1e-12);
      }
    }
  }
}

TEST(Backfit, PseudoWithOneLevelEqualsBf) {
  FitConfig one;
  one.pseudo_J = 1;
  // Covariates avoid the last h of each interval, so the end nodes carry no weight.
  one.allow_dead_points = true;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t d = 2 + seed % 2;
    const double h = 0.4;
    const Dataset data = interior_dataset(100, d, h, 500 + seed);
    const std::vector<double> bw(d, h);
    const auto bf = aqr::fit_bf(data, 0.5, bw, one);
    const auto ps = aqr::fit_sbf_pseudo(data, 0.5, bw, one);
    EXPECT_EQ(bf.iterations_run, ps.iterations_run);
    EXPECT_NEAR(bf.m0, ps.m0, 1e-8);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t g = 0; g < bf.grids[j].size(); ++g)
        EXPECT_NEAR(bf.components[j][g], ps.components[j][g], 1e-8);
  }
}

TEST(Backfit, PseudoApproachesGridScheme) {
  FitConfig cfg;
  cfg.pseudo_J = 50;
  cfg.max_cycles = 200;
  double worst = 0.0, total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Dataset full = sim_dataset(50, 900 + seed);
    Dataset data;
    data.x = aqr::Matrix(50, 2);
    for (std::size_t i = 0; i < 50; ++i) {
      data.x(i, 0) = full.x(i, 0);
      data.x(i, 1) = full.x(i, 1);
    }
    data.y = full.y;
    data.intervals = {{-1.0, 1.0}, {-1.0, 1.0}};
    const std::vector<double> bw(2, 0.6);
    const auto grid = aqr::fit_sbf_grid(data, 0.5, bw, cfg);
    const auto pseudo = aqr::fit_sbf_pseudo(data, 0.5, bw, cfg);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t g = 0; g < grid.grids[j].size(); ++g) {
        const double gap = std::abs(grid.components[j][g] - pseudo.components[j][g]);
        worst = std::max(worst, gap);
        total += gap;
        ++count;
      }
  }
  std::cout << "[ info ] J=50 pseudo vs grid sup distance: " << worst
            << ", mean distance: " << total / count << "\n";
  // Calibrated at n=50, where local sample quantiles jump between residuals;
  // the gap shrinks with n (about 0.04 at n=200, 0.013 at n=800).
  EXPECT_LE(worst, 0.2);
  EXPECT_LE(total / count, 0.05);
}

TEST(Backfit, ConstraintInvariant) {
  const Dataset data = sim_dataset(120, 7);
  const std::vector<double> h(3, 0.5);
  for (Method m : kQuantileMethods)
    for (double alpha : {0.2, 0.5, 0.8}) expect_centered(aqr::fit_quantile(m, data, alpha, h));
  FitConfig uniform;
  uniform.normalization = aqr::NormalizationWeights::uniform;
  const auto fit = aqr::fit_bf(data, 0.5, h, uniform);
  for (double w : fit.weight_curves[0]) EXPECT_EQ(w, 1.0);
  expect_centered(fit);
}

TEST(Backfit, GridAndGridGeometry) {
  const Dataset data = sim_dataset(80, 8);
  const std::vector<double> h(3, 0.5);
  const auto fit = aqr::fit_bf(data, 0.5, h);
  for (const auto& grid : fit.grids) {
    EXPECT_EQ(grid.size(), 41u);
    EXPECT_EQ(grid.front(), -1.0);
    EXPECT_EQ(grid.back(), 1.0);
    for (std::size_t g = 1; g < grid.size(); ++g) EXPECT_LT(grid[g - 1], grid[g]);
  }
}

TEST(NormalizeFit, Examples) {
  const Dataset data = sim_dataset(100, 9);
  const std::vector<double> h(3, 0.5);
  const auto fit = aqr::fit_sbf_grid(data, 0.5, h);
  const auto again = aqr::normalize_fit(fit, fit.weight_curves);
  EXPECT_NEAR(again.m0, fit.m0, 1e-12);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t g = 0; g < 41; ++g) EXPECT_NEAR(again.components[j][g], fit.components[j][g], 1e-12);

  auto shifted = fit;
  for (double& v : shifted.components[1]) v = 5.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> wgen(0.1, 3.0);
  auto curves = fit.weight_curves;
  for (auto& c : curves)
    for (double& w : c) w = wgen(rng);
  const auto centred = aqr::normalize_fit(shifted, curves);
  for (double v : centred.components[1]) EXPECT_NEAR(v, 0.0, 1e-12);
  const double other = [&] {
    auto tmp = fit;
    tmp.components[1].assign(41, 0.0);
    return aqr::normalize_fit(tmp, curves).m0;
  }();
  EXPECT_NEAR(centred.m0, other + 5.0, 1e-12);

  auto zero = curves;
  zero[0].assign(41, 0.0);
  EXPECT_THROW(aqr::normalize_fit(fit, zero), std::invalid_argument);
}

TEST(NormalizeFit, NeutralityProperty) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_real_distribution<double> value(-3.0, 3.0);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  for (int t = 0; t < 20; ++t) {
    aqr::AdditiveFit fit;
    fit.m0 = value(rng);
    fit.intervals.assign(3, {-1.0, 1.0});
    std::vector<std::vector<double>> curves;
    for (int j = 0; j < 3; ++j) {
      fit.grids.push_back(aqr::linspace({-1.0, 1.0}, 41));
      std::vector<double> c(41), w(41);
      for (auto& v : c) v = value(rng);
      for (auto& v : w) v = weight(rng);
      fit.components.push_back(c);
      curves.push_back(w);
    }
    const auto norm = aqr::normalize_fit(fit, curves);
    for (int k = 0; k < 100; ++k) {
      const std::vector<double> x{coord(rng), coord(rng), coord(rng)};
      EXPECT_NEAR(aqr::predict(norm, x), aqr::predict(fit, x), 1e-12);
    }
  }
}

TEST(Predict, Examples) {
  aqr::AdditiveFit fit;
  fit.m0 = 1.5;
  fit.intervals.assign(2, {-1.0, 1.0});
  fit.grids.assign(2, aqr::linspace({-1.0, 1.0}, 5));
  fit.components.assign(2, std::vector<double>(5, 0.0));
  EXPECT_EQ(aqr::predict(fit, std::vector<double>{0.3, -0.7}), 1.5);
  fit.components[0] = {1, 2, 4, 8, 16};
  fit.components[1] = {0, -1, -2, -3, -4};
  EXPECT_EQ(aqr::predict(fit, std::vector<double>{0.5, -0.5}), 1.5 + 8 - 1);
  const double a = aqr::predict(fit, std::vector<double>{0.0, 0.0});
  const double b = aqr::predict(fit, std::vector<double>{0.5, 0.5});
  EXPECT_DOUBLE_EQ(aqr::predict(fit, std::vector<double>{0.25, 0.25}), 0.5 * (a + b));
  EXPECT_THROW(aqr::predict(fit, std::vector<double>{1.1, 0.0}), std::domain_error);
  EXPECT_THROW(aqr::predict(fit, std::vector<double>{0.0}), std::invalid_argument);
}

TEST(Backfit, EquivarianceProperty) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset data = sim_dataset(100, 40 + seed);
    const std::vector<double> h(3, 0.5);
    for (Method m : {Method::bf, Method::sbf_grid}) {
      const auto base = aqr::fit_quantile(m, data, 0.4, h);
      Dataset shifted = data;
      for (double& y : shifted.y) y += 3.0;
      const auto fs = aqr::fit_quantile(m, shifted, 0.4, h);
      EXPECT_NEAR(fs.m0, base.m0 + 3.0, 1e-9);
      Dataset scaled = data;
      for (double& y : scaled.y) y *= 2.0;
      const auto fl = aqr::fit_quantile(m, scaled, 0.4, h);
      EXPECT_NEAR(fl.m0, 2.0 * base.m0, 1e-12);
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t g = 0; g < 41; ++g) {
          EXPECT_NEAR(fs.components[j][g], base.components[j][g], 1e-9);
          EXPECT_NEAR(fl.components[j][g], 2.0 * base.components[j][g], 1e-12);
        }
    }
  }
}

TEST(Backfit, ObjectiveDecreases) {
  FitConfig cfg;
  cfg.trace_objective = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset data = sim_dataset(80, 60 + seed);
    const std::vector<double> h(3, 0.5);
    const auto fit = aqr::fit_sbf_grid(data, 0.5, h, cfg);
    ASSERT_EQ(fit.objective_trace.size(), static_cast<std::size_t>(fit.iterations_run) + 1);
    EXPECT_LE(fit.objective_trace.back(), fit.objective_trace.front());
    for (double v : fit.objective_trace) std::cout << "  " << v;
    std::cout << "\n";
  }
}

TEST(Backfit, MonotoneInAlphaLogged) {
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coord(-0.9, 0.9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset data = sim_dataset(200, 1000 + seed);
    const std::vector<double> h(3, 0.5);
    const auto q2 = aqr::fit_bf(data, 0.2, h);
    const auto q5 = aqr::fit_bf(data, 0.5, h);
    const auto q8 = aqr::fit_bf(data, 0.8, h);
    for (int k = 0; k < 25; ++k) {
      const std::vector<double> x{coord(rng), coord(rng), coord(rng)};
      const double a = aqr::predict(q2, x), b = aqr::predict(q5, x), c = aqr::predict(q8, x);
      ++checked;
      if (!(a <= b && b <= c)) ++violations;
    }
  }
  std::cout << "[ info ] quantile crossings: " << violations << " of " << checked << "\n";
  EXPECT_LE(violations * 10, checked);
}

TEST(Backfit, DeadPointsAndBudget) {
  Dataset data = interior_dataset(30, 2, 0.5, 3);
  const std::vector<double> tiny(2, 0.05);
  EXPECT_THROW(aqr::fit_bf(data, 0.5, tiny), std::invalid_argument);
  FitConfig allow;
  allow.allow_dead_points = true;
  allow.normalization = aqr::NormalizationWeights::uniform;
  const auto fit = aqr::fit_bf(data, 0.5, tiny, allow);
  EXPECT_FALSE(fit.dead_points[0].empty());
  EXPECT_EQ(fit.components[0].front(), fit.components[0][1]);

  FitConfig budget;
  budget.work_budget = 1000.0;
  const std::vector<double> h(2, 0.5);
  EXPECT_THROW(aqr::fit_sbf_grid(data, 0.5, h, budget), std::invalid_argument);
}

TEST(Backfit, InputValidation) {
  Dataset data = interior_dataset(30, 2, 0.0, 4);
  const std::vector<double> h(2, 0.5);
  EXPECT_THROW(aqr::fit_bf(data, 0.0, h), std::domain_error);
  EXPECT_THROW(aqr::fit_bf(data, 0.5, std::vector<double>{0.5}), std::invalid_argument);
  Dataset one = data;
  one.y.resize(1);
  one.x = aqr::Matrix(1, 2);
  EXPECT_THROW(aqr::fit_bf(one, 0.5, h), std::invalid_argument);
  Dataset outside = data;
  outside.x(0, 0) = 1.5;
  EXPECT_THROW(aqr::fit_bf(outside, 0.5, h), std::domain_error);
  FitConfig bad;
  bad.grid_size = 3;
  EXPECT_THROW(aqr::fit_bf(data, 0.5, h, bad), std::invalid_argument);
  EXPECT_THROW(aqr::fit_quantile(Method::bf_star, data, 0.5, h), std::invalid_argument);
}

TEST(Backfit, Deterministic) {
  const Dataset data = sim_dataset(100, 5);
  const std::vector<double> h(3, 0.5);
  for (Method m : kQuantileMethods) {
    const auto a = aqr::fit_quantile(m, data, 0.5, h);
    const auto b = aqr::fit_quantile(m, data, 0.5, h);
    EXPECT_EQ(a.components, b.components);
    EXPECT_EQ(a.m0, b.m0);
  }
}
