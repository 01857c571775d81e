#ifndef AQR_BACKFIT_HPP
#define AQR_BACKFIT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aqr/kernel.hpp"
#include "aqr/numeric.hpp"
#include "aqr/quantile.hpp"

namespace aqr {

enum class Method { bf, sbf_grid, sbf_pseudo, bf_star, sbf_star };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bf: return "BF";
    case Method::sbf_grid: return "SBF_grid";
    case Method::sbf_pseudo: return "SBF_pseudo";
    case Method::bf_star: return "BF_star";
    case Method::sbf_star: return "SBF_star";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  for (Method m : {Method::bf, Method::sbf_grid, Method::sbf_pseudo, Method::bf_star,
                   Method::sbf_star})
    if (s == to_string(m)) return m;
  if (s == "SBF") return Method::sbf_grid;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

/// Responses with their covariates; x is n x d, one row per observation.
struct Dataset {
  std::vector<double> y;
  Matrix x;
  std::vector<Interval> intervals;

  std::size_t size() const { return y.size(); }
  std::size_t dimension() const { return x.cols(); }

  void validate() const {
    if (y.empty()) throw std::invalid_argument("Dataset: no observations");
    if (x.rows() != y.size()) throw std::invalid_argument("Dataset: x/y row mismatch");
    if (x.cols() == 0) throw std::invalid_argument("Dataset: no covariates");
    if (intervals.size() != x.cols())
      throw std::invalid_argument("Dataset: one support interval per covariate required");
    for (const Interval& iv : intervals)
      if (!(iv.lo < iv.hi)) throw std::invalid_argument("Dataset: empty support interval");
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        if (!intervals[j].contains(x(i, j)))
          throw std::domain_error("Dataset: covariate outside its support interval (row " +
                                  std::to_string(i) + ", column " + std::to_string(j) + ")");
  }
};

enum class NormalizationWeights { estimated_density, uniform };

struct FitConfig {
  std::size_t grid_size = 41;
  int max_cycles = 50;
  /// Convergence threshold, relative to the interquartile range of the response.
  double tol = 1e-4;
  std::size_t pseudo_J = 10;
  NormalizationWeights normalization = NormalizationWeights::estimated_density;
  /// Cap on weighted terms per SBF_grid component update (d * G^(d-1) * n).
  double work_budget = 1e8;
  /// Keep grid points without kernel weight at their previous value instead of failing.
  bool allow_dead_points = false;
  /// Record the discretized smooth objective after every cycle (SBF_grid).
  bool trace_objective = false;

  void validate() const {
    if (grid_size < 5) throw std::invalid_argument("FitConfig: grid_size must be >= 5");
    if (max_cycles < 1) throw std::invalid_argument("FitConfig: max_cycles must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("FitConfig: tol must be positive");
    if (pseudo_J < 1) throw std::invalid_argument("FitConfig: pseudo_J must be >= 1");
  }
};

/// Fitted additive model: m0 plus components tabulated on equidistant grids.
struct AdditiveFit {
  Method method = Method::bf;
  double alpha = 0.5;
  std::vector<double> bandwidths;
  std::vector<Interval> intervals;
  std::vector<std::vector<double>> grids;
  std::vector<std::vector<double>> components;
  double m0 = 0.0;
  int iterations_run = 0;
  bool converged = false;

  /// Curves w_j used for the centering constraint int m_j w_j = 0.
  std::vector<std::vector<double>> weight_curves;
  /// Grid indices per component that never received kernel weight.
  std::vector<std::vector<std::size_t>> dead_points;
  /// Sup-norm component change of each cycle.
  std::vector<double> cycle_changes;
  /// Discretized smooth objective: initial value, then one entry per cycle.
  std::vector<double> objective_trace;

  std::size_t dimension() const { return components.size(); }
};

/// m0 + sum_j m_j(x_j) with linear interpolation between grid nodes.
inline double predict(const AdditiveFit& fit, std::span<const double> x) {
  if (x.size() != fit.dimension()) throw std::invalid_argument("predict: dimension mismatch");
  double value = fit.m0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!fit.intervals[j].contains(x[j]))
      throw std::domain_error("predict: coordinate outside the support interval");
    value += interpolate(fit.grids[j], fit.components[j], x[j]);
  }
  return value;
}

/// Value of component j at x (linear interpolation, no interval check).
inline double component_value(const AdditiveFit& fit, std::size_t j, double x) {
  return interpolate(fit.grids[j], fit.components[j], x);
}

namespace detail {

inline void center_component(AdditiveFit& fit, std::size_t j, std::span<const double> weights) {
  const double mass = trapezoid(fit.grids[j], weights);
  if (!(mass > 0.0)) throw std::invalid_argument("normalize_fit: weight curve with zero integral");
  std::vector<double> product(weights.size());
  for (std::size_t g = 0; g < weights.size(); ++g) product[g] = fit.components[j][g] * weights[g];
  const double shift = trapezoid(fit.grids[j], product) / mass;
  for (double& v : fit.components[j]) v -= shift;
  fit.m0 += shift;
}

}  // namespace detail

/// Centres every component against its weight curve and moves the shifts
/// into m0; predictions are unchanged.
inline AdditiveFit normalize_fit(AdditiveFit fit,
                                 const std::vector<std::vector<double>>& weight_curves) {
  if (weight_curves.size() != fit.dimension())
    throw std::invalid_argument("normalize_fit: one weight curve per component required");
  for (std::size_t j = 0; j < fit.dimension(); ++j) {
    if (weight_curves[j].size() != fit.grids[j].size())
      throw std::invalid_argument("normalize_fit: weight curve does not match grid");
    for (double w : weight_curves[j])
      if (!(w >= 0.0)) throw std::invalid_argument("normalize_fit: negative weight");
    detail::center_component(fit, j, weight_curves[j]);
  }
  fit.weight_curves = weight_curves;
  return fit;
}

namespace detail {

/// Kernel values K(grid_g, X_i) (optionally times a per-node factor),
/// stored per observation over the contiguous range of nodes it reaches.
struct SparseKernel {
  std::vector<std::size_t> first;
  std::vector<std::size_t> offset;
  std::vector<std::size_t> count;
  std::vector<double> values;
  std::size_t grid_size = 0;

  double at(std::size_t i, std::size_t g) const {
    if (g < first[i] || g >= first[i] + count[i]) return 0.0;
    return values[offset[i] + g - first[i]];
  }
};

inline SparseKernel tabulate_kernel(const KernelSpec& spec, std::span<const double> grid,
                                    std::span<const double> samples,
                                    std::span<const double> node_factor = {}) {
  SparseKernel k;
  k.grid_size = grid.size();
  const std::size_t n = samples.size();
  k.first.resize(n);
  k.offset.resize(n);
  k.count.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [lo, hi] = spec.support_range(grid, samples[i]);
    k.first[i] = lo;
    k.offset[i] = k.values.size();
    k.count[i] = hi >= lo ? hi - lo + 1 : 0;
    for (std::size_t g = lo; g < lo + k.count[i]; ++g) {
      double v = spec(grid[g], samples[i]);
      if (!node_factor.empty()) v *= node_factor[g];
      k.values.push_back(v);
    }
  }
  return k;
}

/// Multiset of partial residuals; entry e belongs to observation owner[e]
/// and carries the factor weight[e] on top of the owner's kernel weight.
struct ResidualEntries {
  std::vector<double> residual;
  std::vector<double> weight;
  std::vector<std::uint32_t> owner;

  void clear() {
    residual.clear();
    weight.clear();
    owner.clear();
  }
  void push(double r, double w, std::size_t i) {
    residual.push_back(r);
    weight.push_back(w);
    owner.push_back(static_cast<std::uint32_t>(i));
  }
  std::size_t size() const { return residual.size(); }
};

/// For every grid node g, the weighted alpha-quantile of the residual
/// multiset with weights kernel(owner, g) * weight. Sorting happens once;
/// each node then accumulates along the shared order, which reproduces
/// weighted_quantile exactly. Nodes with zero total weight are reported in
/// `dead` and keep their entry in `values`.
inline void grid_quantiles(const ResidualEntries& entries, const SparseKernel& kernel,
                           double alpha, std::vector<double>& values,
                           std::vector<std::size_t>& dead) {
  const std::size_t m = entries.size();
  std::vector<std::pair<double, std::uint32_t>> order(m);
  for (std::size_t e = 0; e < m; ++e)
    order[e] = {entries.residual[e], static_cast<std::uint32_t>(e)};
  std::sort(order.begin(), order.end());

  const std::size_t G = kernel.grid_size;
  std::vector<double> total(G, 0.0);
  for (const auto& [r, e] : order) {
    const std::size_t i = entries.owner[e];
    const double b = entries.weight[e];
    const double* kv = kernel.values.data() + kernel.offset[i];
    for (std::size_t c = 0; c < kernel.count[i]; ++c) total[kernel.first[i] + c] += kv[c] * b;
  }

  std::vector<double> target(G);
  std::vector<char> done(G, 0);
  std::size_t remaining = 0;
  dead.clear();
  for (std::size_t g = 0; g < G; ++g) {
    target[g] = alpha * total[g];
    if (total[g] > 0.0) {
      ++remaining;
    } else {
      done[g] = 1;
      dead.push_back(g);
    }
  }

  std::vector<double> cumulative(G, 0.0);
  for (std::size_t s = 0; s < m && remaining > 0; ++s) {
    const auto [r, e] = order[s];
    const std::size_t i = entries.owner[e];
    const double b = entries.weight[e];
    const double* kv = kernel.values.data() + kernel.offset[i];
    for (std::size_t c = 0; c < kernel.count[i]; ++c) {
      const std::size_t g = kernel.first[i] + c;
      if (done[g]) continue;
      const double w = kv[c] * b;
      if (w == 0.0) continue;
      cumulative[g] += w;
      if (cumulative[g] >= target[g]) {
        values[g] = r;
        done[g] = 1;
        --remaining;
      }
    }
  }
}

inline std::vector<std::vector<double>> normalization_curves(const Dataset& data,
                                                             const std::vector<KernelSpec>& specs,
                                                             const std::vector<std::vector<double>>& grids,
                                                             NormalizationWeights kind) {
  std::vector<std::vector<double>> curves;
  for (std::size_t j = 0; j < grids.size(); ++j) {
    if (kind == NormalizationWeights::uniform) {
      curves.emplace_back(grids[j].size(), 1.0);
    } else {
      curves.push_back(kde_marginal(data.x.column(j), specs[j], grids[j]));
    }
  }
  return curves;
}

/// Shared setup: validation, grids, kernel specs, normalization curves.
struct FitSetup {
  std::vector<KernelSpec> specs;
  AdditiveFit fit;
  double abs_tol = 0.0;
};

inline FitSetup prepare(const Dataset& data, double alpha, std::span<const double> bandwidths,
                        const FitConfig& config, Method method) {
  data.validate();
  config.validate();
  check_level(alpha);
  if (data.size() < 2) throw std::invalid_argument("fit: need at least 2 observations");
  const std::size_t d = data.dimension();
  if (bandwidths.size() != d) throw std::invalid_argument("fit: one bandwidth per covariate");

  FitSetup s;
  s.fit.method = method;
  s.fit.alpha = alpha;
  s.fit.bandwidths.assign(bandwidths.begin(), bandwidths.end());
  s.fit.intervals = data.intervals;
  for (std::size_t j = 0; j < d; ++j) {
    s.specs.emplace_back(bandwidths[j], data.intervals[j]);
    s.fit.grids.push_back(linspace(data.intervals[j], config.grid_size));
    s.fit.components.emplace_back(config.grid_size, 0.0);
  }
  s.fit.weight_curves =
      normalization_curves(data, s.specs, s.fit.grids, config.normalization);
  s.fit.dead_points.resize(d);
  const double iqr = interquartile_range(data.y);
  s.abs_tol = config.tol * (iqr > 0.0 ? iqr : 1.0);
  return s;
}

/// Gauss-Seidel cycles: update(j) refreshes fit.components[j] and returns
/// the dead nodes; each update is followed by recentering.
template <class Update, class Objective>
void run_cycles(AdditiveFit& fit, const FitConfig& config, double abs_tol, Update&& update,
                Objective&& objective) {
  const std::size_t d = fit.dimension();
  if (config.trace_objective) fit.objective_trace.push_back(objective());
  for (int cycle = 1; cycle <= config.max_cycles; ++cycle) {
    const auto previous = fit.components;
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<std::size_t> dead = update(j);
      if (!dead.empty() && !config.allow_dead_points)
        throw std::invalid_argument(
            "fit: bandwidth too small, grid node without kernel weight in component " +
            std::to_string(j + 1));
      fit.dead_points[j] = std::move(dead);
      center_component(fit, j, fit.weight_curves[j]);
    }
    double change = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t g = 0; g < previous[j].size(); ++g)
        change = std::max(change, std::abs(fit.components[j][g] - previous[j][g]));
    fit.cycle_changes.push_back(change);
    fit.iterations_run = cycle;
    if (config.trace_objective) fit.objective_trace.push_back(objective());
    if (change <= abs_tol) {
      fit.converged = true;
      break;
    }
  }
}

inline double sample_quantile(std::span<const double> y, double alpha) {
  return weighted_quantile(
      CheckLossProblem(std::vector<double>(y.begin(), y.end()),
                       std::vector<double>(y.size(), 1.0), alpha));
}

/// Calls visit(node_indices, weight) for every node of the product grid
/// over `dims` reached by observation i, where weight multiplies the
/// per-dimension sparse kernel values.
template <class Visit>
void for_each_product_node(const std::vector<const SparseKernel*>& kernels, std::size_t i,
                           std::vector<std::size_t>& nodes, Visit&& visit) {
  const std::size_t k = kernels.size();
  nodes.assign(k, 0);
  for (std::size_t a = 0; a < k; ++a) {
    if (kernels[a]->count[i] == 0) return;
    nodes[a] = kernels[a]->first[i];
  }
  while (true) {
    double w = 1.0;
    for (std::size_t a = 0; a < k; ++a) w *= kernels[a]->at(i, nodes[a]);
    if (w != 0.0) visit(nodes, w);
    std::size_t a = 0;
    for (; a < k; ++a) {
      if (++nodes[a] < kernels[a]->first[i] + kernels[a]->count[i]) break;
      nodes[a] = kernels[a]->first[i];
    }
    if (a == k) return;
  }
}

}  // namespace detail

/// Discretized smooth-backfitting objective
///   sum_i sum_u tau(Y_i - m0 - sum_j m_j(u_j)) prod_j K_j(u_j, X_j^i) du_j
/// over the fit's product grid with trapezoid weights.
inline double smooth_objective(const Dataset& data, const AdditiveFit& fit) {
  const std::size_t d = fit.dimension();
  std::vector<detail::SparseKernel> kernels;
  for (std::size_t j = 0; j < d; ++j) {
    const auto tw = trapezoid_weights(fit.grids[j]);
    kernels.push_back(detail::tabulate_kernel(KernelSpec(fit.bandwidths[j], fit.intervals[j]),
                                              fit.grids[j], data.x.column(j), tw));
  }
  std::vector<const detail::SparseKernel*> ptrs;
  for (const auto& k : kernels) ptrs.push_back(&k);
  std::vector<std::size_t> nodes;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::for_each_product_node(ptrs, i, nodes, [&](const std::vector<std::size_t>& u, double w) {
      double r = data.y[i] - fit.m0;
      for (std::size_t j = 0; j < d; ++j) r -= fit.components[j][u[j]];
      sum += w * check_loss(r, fit.alpha);
    });
  }
  return sum;
}

/// Ordinary backfitting for the conditional alpha-quantile.
inline AdditiveFit fit_bf(const Dataset& data, double alpha, std::span<const double> bandwidths,
                          const FitConfig& config = {}) {
  auto setup = detail::prepare(data, alpha, bandwidths, config, Method::bf);
  AdditiveFit& fit = setup.fit;
  const std::size_t n = data.size();
  const std::size_t d = data.dimension();

  std::vector<detail::SparseKernel> kernels;
  std::vector<std::vector<GridCell>> cells(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto xj = data.x.column(j);
    kernels.push_back(detail::tabulate_kernel(setup.specs[j], fit.grids[j], xj));
    for (double v : xj) cells[j].push_back(locate(fit.grids[j], v));
  }
  fit.m0 = detail::sample_quantile(data.y, alpha);

  detail::ResidualEntries entries;
  auto update = [&](std::size_t j) {
    entries.clear();
    for (std::size_t i = 0; i < n; ++i) {
      double r = data.y[i] - fit.m0;
      for (std::size_t l = 0; l < d; ++l)
        if (l != j) r -= interpolate(fit.components[l], cells[l][i]);
      entries.push(r, 1.0, i);
    }
    std::vector<std::size_t> dead;
    detail::grid_quantiles(entries, kernels[j], alpha, fit.components[j], dead);
    return dead;
  };
  detail::run_cycles(fit, config, setup.abs_tol, update, [&] { return smooth_objective(data, fit); });
  return fit;
}

/// Smooth backfitting with the integrals over the other coordinates
/// discretized on the product of the component grids (trapezoid weights).
inline AdditiveFit fit_sbf_grid(const Dataset& data, double alpha,
                                std::span<const double> bandwidths,
                                const FitConfig& config = {}) {
  auto setup = detail::prepare(data, alpha, bandwidths, config, Method::sbf_grid);
  AdditiveFit& fit = setup.fit;
  const std::size_t n = data.size();
  const std::size_t d = data.dimension();

  const double work = static_cast<double>(d) *
                      std::pow(static_cast<double>(config.grid_size), static_cast<double>(d - 1)) *
                      static_cast<double>(n);
  if (work > config.work_budget)
    throw std::invalid_argument("fit_sbf_grid: product-grid work exceeds the configured budget");

  std::vector<detail::SparseKernel> kernels;     // K_j(x_j, X_j^i)
  std::vector<detail::SparseKernel> integrands;  // K_l(u_l, X_l^i) du_l
  for (std::size_t j = 0; j < d; ++j) {
    const auto xj = data.x.column(j);
    kernels.push_back(detail::tabulate_kernel(setup.specs[j], fit.grids[j], xj));
    integrands.push_back(detail::tabulate_kernel(setup.specs[j], fit.grids[j], xj,
                                                 trapezoid_weights(fit.grids[j])));
  }
  fit.m0 = detail::sample_quantile(data.y, alpha);

  detail::ResidualEntries entries;
  std::vector<std::size_t> nodes;
  auto update = [&](std::size_t j) {
    std::vector<const detail::SparseKernel*> others;
    std::vector<std::size_t> dims;
    for (std::size_t l = 0; l < d; ++l)
      if (l != j) {
        others.push_back(&integrands[l]);
        dims.push_back(l);
      }
    entries.clear();
    for (std::size_t i = 0; i < n; ++i) {
      detail::for_each_product_node(others, i, nodes,
                                    [&](const std::vector<std::size_t>& u, double w) {
                                      double r = data.y[i] - fit.m0;
                                      for (std::size_t a = 0; a < dims.size(); ++a)
                                        r -= fit.components[dims[a]][u[a]];
                                      entries.push(r, w, i);
                                    });
    }
    std::vector<std::size_t> dead;
    detail::grid_quantiles(entries, kernels[j], alpha, fit.components[j], dead);
    return dead;
  };
  detail::run_cycles(fit, config, setup.abs_tol, update, [&] { return smooth_objective(data, fit); });
  return fit;
}

/// Smooth backfitting through J deterministic pseudo-observations per data
/// point, placed at kernel-CDF levels k/(J+1); runs the ordinary backfitting
/// update on the expanded sample of size J n.
inline AdditiveFit fit_sbf_pseudo(const Dataset& data, double alpha,
                                  std::span<const double> bandwidths,
                                  const FitConfig& config = {}) {
  auto setup = detail::prepare(data, alpha, bandwidths, config, Method::sbf_pseudo);
  AdditiveFit& fit = setup.fit;
  const std::size_t n = data.size();
  const std::size_t d = data.dimension();
  const std::size_t J = config.pseudo_J;

  std::vector<detail::SparseKernel> kernels;
  std::vector<std::vector<GridCell>> pseudo_cells(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto xj = data.x.column(j);
    kernels.push_back(detail::tabulate_kernel(setup.specs[j], fit.grids[j], xj));
    pseudo_cells[j].reserve(n * J);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 1; k <= J; ++k) {
        const double level = static_cast<double>(k) / static_cast<double>(J + 1);
        pseudo_cells[j].push_back(locate(fit.grids[j], setup.specs[j].inverse_cdf(xj[i], level)));
      }
  }
  fit.m0 = detail::sample_quantile(data.y, alpha);

  detail::ResidualEntries entries;
  auto update = [&](std::size_t j) {
    entries.clear();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < J; ++k) {
        double r = data.y[i] - fit.m0;
        for (std::size_t l = 0; l < d; ++l)
          if (l != j) r -= interpolate(fit.components[l], pseudo_cells[l][i * J + k]);
        entries.push(r, 1.0, i);
      }
    std::vector<std::size_t> dead;
    detail::grid_quantiles(entries, kernels[j], alpha, fit.components[j], dead);
    return dead;
  };
  detail::run_cycles(fit, config, setup.abs_tol, update, [&] { return smooth_objective(data, fit); });
  return fit;
}

/// Dispatch for the three quantile estimators.
inline AdditiveFit fit_quantile(Method method, const Dataset& data, double alpha,
                                std::span<const double> bandwidths, const FitConfig& config = {}) {
  switch (method) {
    case Method::bf: return fit_bf(data, alpha, bandwidths, config);
    case Method::sbf_grid: return fit_sbf_grid(data, alpha, bandwidths, config);
    case Method::sbf_pseudo: return fit_sbf_pseudo(data, alpha, bandwidths, config);
    default: break;
  }
  throw std::invalid_argument("fit_quantile: not a quantile method");
}

}  // namespace aqr

#endif  // AQR_BACKFIT_HPP
