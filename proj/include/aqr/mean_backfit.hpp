#ifndef AQR_MEAN_BACKFIT_HPP
#define AQR_MEAN_BACKFIT_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "aqr/backfit.hpp"
#include "aqr/kernel.hpp"
#include "aqr/numeric.hpp"

namespace aqr {

/// Pseudo-responses with per-observation weights f_{eps|X}(0 | X_i) > 0.
struct WeightedDataset {
  std::vector<double> z;
  Matrix x;
  std::vector<double> weights;
  std::vector<Interval> intervals;
  /// Quantile level the pseudo-responses were built for; metadata only.
  double alpha = 0.5;

  Dataset as_dataset() const { return Dataset{z, x, intervals}; }

  void validate() const {
    as_dataset().validate();
    if (weights.size() != z.size())
      throw std::invalid_argument("WeightedDataset: weight/response size mismatch");
    for (double w : weights)
      if (!(w > 0.0)) throw std::invalid_argument("WeightedDataset: weights must be positive");
  }
};

namespace detail {

inline double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += weights[i] * values[i];
    den += weights[i];
  }
  return num / den;
}

inline FitSetup prepare_weighted(const WeightedDataset& wdata, std::span<const double> bandwidths,
                                 const FitConfig& config, Method method) {
  wdata.validate();
  auto setup = prepare(wdata.as_dataset(), wdata.alpha, bandwidths, config, method);
  setup.fit.m0 = weighted_mean(wdata.z, wdata.weights);
  return setup;
}

}  // namespace detail

/// Weighted least-squares ordinary backfitting: every grid update is the
/// f-weighted local-constant mean of the partial residuals.
inline AdditiveFit fit_bf_star(const WeightedDataset& wdata, std::span<const double> bandwidths,
                               const FitConfig& config = {}) {
  auto setup = detail::prepare_weighted(wdata, bandwidths, config, Method::bf_star);
  AdditiveFit& fit = setup.fit;
  const std::size_t n = wdata.z.size();
  const std::size_t d = wdata.x.cols();

  std::vector<detail::SparseKernel> kernels;
  std::vector<std::vector<GridCell>> cells(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto xj = wdata.x.column(j);
    kernels.push_back(detail::tabulate_kernel(setup.specs[j], fit.grids[j], xj));
    for (double v : xj) cells[j].push_back(locate(fit.grids[j], v));
  }

  std::vector<double> num;
  std::vector<double> den;
  auto update = [&](std::size_t j) {
    const std::size_t G = fit.grids[j].size();
    num.assign(G, 0.0);
    den.assign(G, 0.0);
    const auto& k = kernels[j];
    for (std::size_t i = 0; i < n; ++i) {
      double r = wdata.z[i] - fit.m0;
      for (std::size_t l = 0; l < d; ++l)
        if (l != j) r -= interpolate(fit.components[l], cells[l][i]);
      for (std::size_t c = 0; c < k.count[i]; ++c) {
        const double w = wdata.weights[i] * k.values[k.offset[i] + c];
        num[k.first[i] + c] += w * r;
        den[k.first[i] + c] += w;
      }
    }
    std::vector<std::size_t> dead;
    for (std::size_t g = 0; g < G; ++g) {
      if (den[g] > 0.0)
        fit.components[j][g] = num[g] / den[g];
      else
        dead.push_back(g);
    }
    return dead;
  };
  detail::run_cycles(fit, config, setup.abs_tol, update, [] { return 0.0; });
  return fit;
}

/// Weighted least-squares smooth backfitting:
///   m_j(x_j) = m~_j(x_j) - m0 - sum_{l != j} int m_l(x_l) f^w_{jl}(x_j, x_l) / f^w_j(x_j) dx_l
/// with weighted Nadaraya-Watson curves m~_j and weighted kernel density
/// estimates tabulated on the grids, integrals by the trapezoid rule.
inline AdditiveFit fit_sbf_star(const WeightedDataset& wdata, std::span<const double> bandwidths,
                                const FitConfig& config = {}) {
  auto setup = detail::prepare_weighted(wdata, bandwidths, config, Method::sbf_star);
  AdditiveFit& fit = setup.fit;
  const std::size_t n = wdata.z.size();
  const std::size_t d = wdata.x.cols();

  std::vector<std::vector<double>> xs(d);
  for (std::size_t j = 0; j < d; ++j) xs[j] = wdata.x.column(j);

  std::vector<double> fz(n);
  for (std::size_t i = 0; i < n; ++i) fz[i] = wdata.weights[i] * wdata.z[i];

  std::vector<std::vector<double>> density(d);
  std::vector<std::vector<double>> smoother(d);
  std::vector<std::vector<std::size_t>> dead(d);
  for (std::size_t j = 0; j < d; ++j) {
    density[j] = kde_marginal(xs[j], setup.specs[j], fit.grids[j], wdata.weights);
    // kde_marginal rejects negative weights, so sum_i f_i Z_i K is built directly.
    std::vector<double> num(fit.grids[j].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [lo, hi] = setup.specs[j].support_range(fit.grids[j], xs[j][i]);
      for (std::size_t g = lo; g <= hi && g < num.size(); ++g)
        num[g] += fz[i] * setup.specs[j](fit.grids[j][g], xs[j][i]);
    }
    smoother[j].assign(num.size(), 0.0);
    for (std::size_t g = 0; g < num.size(); ++g) {
      if (density[j][g] > 0.0)
        smoother[j][g] = num[g] / static_cast<double>(n) / density[j][g];
      else
        dead[j].push_back(g);
    }
  }

  // Conditional-density kernels f^w_{jl}(x_j, x_l) dx_l / f^w_j(x_j).
  std::vector<std::vector<Matrix>> transition(d, std::vector<Matrix>(d));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t l = 0; l < d; ++l) {
      if (l == j) continue;
      Matrix pair = weighted_kde_pairwise(xs[j], xs[l], setup.specs[j], setup.specs[l],
                                          fit.grids[j], fit.grids[l], wdata.weights);
      const auto tw = trapezoid_weights(fit.grids[l]);
      for (std::size_t a = 0; a < pair.rows(); ++a)
        for (std::size_t b = 0; b < pair.cols(); ++b)
          pair(a, b) = density[j][a] > 0.0 ? pair(a, b) * tw[b] / density[j][a] : 0.0;
      transition[j][l] = std::move(pair);
    }
  }

  auto update = [&](std::size_t j) {
    auto& comp = fit.components[j];
    for (std::size_t a = 0; a < comp.size(); ++a) {
      if (!(density[j][a] > 0.0)) continue;
      double v = smoother[j][a] - fit.m0;
      for (std::size_t l = 0; l < d; ++l) {
        if (l == j) continue;
        const auto row = transition[j][l].row(a);
        double integral = 0.0;
        for (std::size_t b = 0; b < row.size(); ++b) integral += row[b] * fit.components[l][b];
        v -= integral;
      }
      comp[a] = v;
    }
    return dead[j];
  };
  detail::run_cycles(fit, config, setup.abs_tol, update, [] { return 0.0; });
  return fit;
}

}  // namespace aqr

#endif  // AQR_MEAN_BACKFIT_HPP
