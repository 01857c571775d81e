#ifndef AQR_SIM_MODEL_HPP
#define AQR_SIM_MODEL_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <boost/math/distributions/normal.hpp>

#include "aqr/backfit.hpp"
#include "aqr/kernel.hpp"
#include "aqr/numeric.hpp"

namespace aqr {

using Rng = std::mt19937_64;

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Trivariate heteroscedastic location-scale model on [-1, 1]^3:
///   Y = f1(X1) + f2(X2) + f3(X3) + {s1(X1) + s2(X2) + s3(X3)} U,  U ~ N(0, 1),
/// with X drawn from N_3(0, V) conditioned on the cube; V is the identity or
/// has unit variances and 0.9 covariances.
struct SimModel {
  static constexpr std::size_t dimension = 3;

  bool correlated = false;

  static double f(std::size_t j, double x) {
    switch (j) {
      case 0: return x * x * x;
      case 1: return std::sin(std::numbers::pi * x);
      case 2: return 2.0 * std::exp(-16.0 * x * x);
    }
    throw std::out_of_range("SimModel::f: component index");
  }

  static double sigma(std::size_t j, double x) {
    switch (j) {
      case 0: return std::cos(x);
      case 1: return std::exp(x);
      case 2: return std::exp(x);
    }
    throw std::out_of_range("SimModel::sigma: component index");
  }

  static double mean_sum(std::span<const double> x) {
    return f(0, x[0]) + f(1, x[1]) + f(2, x[2]);
  }

  static double scale(std::span<const double> x) {
    return sigma(0, x[0]) + sigma(1, x[1]) + sigma(2, x[2]);
  }

  static std::vector<Interval> intervals() { return {{-1, 1}, {-1, 1}, {-1, 1}}; }

  Eigen::Matrix3d covariance() const {
    Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
    if (correlated) {
      v.setConstant(0.9);
      v.diagonal().setOnes();
    }
    return v;
  }
};

/// n draws from the design distribution by rejection from the untruncated normal.
inline Matrix gen_covariates(std::size_t n, bool correlated, Rng& rng) {
  const Eigen::Matrix3d chol = SimModel{correlated}.covariance().llt().matrixL();
  std::normal_distribution<double> normal;
  Matrix x(n, 3);
  for (std::size_t i = 0; i < n;) {
    Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
    const Eigen::Vector3d v = chol * z;
    if (std::abs(v[0]) < 1.0 && std::abs(v[1]) < 1.0 && std::abs(v[2]) < 1.0) {
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = v[static_cast<Eigen::Index>(j)];
      ++i;
    }
  }
  return x;
}

struct Responses {
  std::vector<double> y;
  /// Standard-normal noise behind each response.
  std::vector<double> u;
};

inline std::vector<double> responses_from_noise(const Matrix& x, std::span<const double> u) {
  std::vector<double> y(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    y[i] = SimModel::mean_sum(x.row(i)) + SimModel::scale(x.row(i)) * u[i];
  return y;
}

inline Responses gen_response(const Matrix& x, Rng& rng) {
  std::normal_distribution<double> normal;
  Responses out;
  out.u.resize(x.rows());
  for (double& v : out.u) v = normal(rng);
  out.y = responses_from_noise(x, out.u);
  return out;
}

namespace detail {

struct DesignMoments {
  std::array<double, 3> mean_f{};
  std::array<double, 3> mean_sigma{};
};

/// E f_j(X_j) and E sigma_j(X_j) under the design, from 10^6 seeded draws;
/// computed once per design.
inline const DesignMoments& design_moments(bool correlated) {
  static std::mutex mutex;
  static std::map<bool, DesignMoments> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(correlated);
  if (it != cache.end()) return it->second;
  constexpr std::size_t draws = 1'000'000;
  Rng rng(correlated ? 0x5eed0c0bu : 0x5eed1d1du);
  const Matrix x = gen_covariates(draws, correlated, rng);
  DesignMoments m;
  for (std::size_t j = 0; j < 3; ++j) {
    double sf = 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      sf += SimModel::f(j, x(i, j));
      ss += SimModel::sigma(j, x(i, j));
    }
    m.mean_f[j] = sf / draws;
    m.mean_sigma[j] = ss / draws;
  }
  return cache.emplace(correlated, m).first->second;
}

}  // namespace detail

/// True additive decomposition of the conditional alpha-quantile: m0 plus
/// components m_j(x; alpha) = c_j + f_j(x) + sigma_j(x) z_alpha centred to
/// have mean zero under the design.
struct TrueQuantileModel {
  double alpha = 0.5;
  /// Standard normal alpha-quantile.
  double z = 0.0;
  double m0 = 0.0;
  std::array<double, 3> c{};

  double component(std::size_t j, double x) const {
    return c[j] + SimModel::f(j, x) + SimModel::sigma(j, x) * z;
  }

  double quantile(std::span<const double> x) const {
    return m0 + component(0, x[0]) + component(1, x[1]) + component(2, x[2]);
  }
};

inline TrueQuantileModel true_quantile_model(double alpha, const SimModel& model) {
  check_level(alpha);
  const auto& mom = detail::design_moments(model.correlated);
  const double z = normal_quantile(alpha);
  TrueQuantileModel t;
  t.alpha = alpha;
  t.z = z;
  for (std::size_t j = 0; j < 3; ++j) {
    t.c[j] = -(mom.mean_f[j] + mom.mean_sigma[j] * z);
    t.m0 -= t.c[j];
  }
  return t;
}

struct TrueComponents {
  double m0 = 0.0;
  std::vector<std::vector<double>> curves;
};

/// True components tabulated on the given grids.
inline TrueComponents true_components(double alpha, const SimModel& model,
                                      const std::vector<std::vector<double>>& grids) {
  if (grids.size() != 3) throw std::invalid_argument("true_components: three grids required");
  const auto truth = true_quantile_model(alpha, model);
  TrueComponents out;
  out.m0 = truth.m0;
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> curve;
    for (double x : grids[j]) curve.push_back(truth.component(j, x));
    out.curves.push_back(std::move(curve));
  }
  return out;
}

/// f_{eps|X}(0 | x) for eps = s(x) (U - z_alpha): phi(z_alpha) / s(x).
inline double oracle_weight(std::span<const double> x, double alpha) {
  return normal_pdf(normal_quantile(alpha)) / SimModel::scale(x);
}

inline std::vector<double> oracle_weights(const Matrix& x, double alpha) {
  check_level(alpha);
  std::vector<double> w(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) w[i] = oracle_weight(x.row(i), alpha);
  return w;
}

struct PseudoResponses {
  std::vector<double> z;
  std::vector<double> weights;
};

/// Z_i = true quantile at X_i + eta_i with eta_i = -(1{eps_i <= 0} - alpha) / f_{eps|X}(0 | X_i).
inline PseudoResponses pseudo_responses(const Matrix& x, std::span<const double> u, double alpha,
                                        const SimModel& model) {
  if (u.size() != x.rows()) throw std::invalid_argument("pseudo_responses: size mismatch");
  const auto truth = true_quantile_model(alpha, model);
  const double z_alpha = normal_quantile(alpha);
  PseudoResponses out;
  out.weights = oracle_weights(x, alpha);
  out.z.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double eps = SimModel::scale(x.row(i)) * (u[i] - z_alpha);
    const double indicator = eps <= 0.0 ? 1.0 : 0.0;
    const double eta = -(indicator - alpha) / out.weights[i];
    out.z[i] = truth.quantile(x.row(i)) + eta;
  }
  return out;
}

/// Integrated squared error of the summed components against the truth,
/// averaged over `eval_sample` (draws from the design). Each true component
/// is recentred with the fit's own weight curve so that both sides obey the
/// same constraint; m0 does not enter.
inline double ise(const AdditiveFit& fit, double alpha, const SimModel& model,
                  const Matrix& eval_sample) {
  if (eval_sample.rows() == 0) throw std::invalid_argument("ise: empty evaluation sample");
  if (fit.dimension() != 3) throw std::invalid_argument("ise: fit must have three components");
  const auto truth = true_quantile_model(alpha, model);
  std::array<double, 3> shift{};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& grid = fit.grids[j];
    std::vector<double> w = fit.weight_curves.size() == 3 ? fit.weight_curves[j]
                                                          : std::vector<double>(grid.size(), 1.0);
    std::vector<double> tw(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) tw[g] = truth.component(j, grid[g]) * w[g];
    shift[j] = trapezoid(grid, tw) / trapezoid(grid, w);
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < eval_sample.rows(); ++r) {
    double diff = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double x = eval_sample(r, j);
      diff += component_value(fit, j, x) - (truth.component(j, x) - shift[j]);
    }
    sum += diff * diff;
  }
  return sum / static_cast<double>(eval_sample.rows());
}

namespace detail {

/// Untruncated N_3(0, V) density.
inline double normal3_density(const Eigen::Matrix3d& precision, double det, double x0, double x1,
                              double x2) {
  const Eigen::Vector3d v(x0, x1, x2);
  return std::exp(-0.5 * v.dot(precision * v)) / std::sqrt(std::pow(2.0 * std::numbers::pi, 3) * det);
}

inline std::vector<double> simpson_weights(std::size_t points, Interval iv) {
  std::vector<double> w(points);
  const double h = iv.length() / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k)
    w[k] = h / 3.0 * ((k == 0 || k + 1 == points) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0));
  return w;
}

constexpr std::size_t kDesignQuadraturePoints = 101;

/// Integral of the untruncated normal over the cube; computed once per design.
inline double design_mass(bool correlated) {
  static std::mutex mutex;
  static std::map<bool, double> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(correlated); it != cache.end()) return it->second;
  const Eigen::Matrix3d cov = SimModel{correlated}.covariance();
  const Eigen::Matrix3d prec = cov.inverse();
  const double det = cov.determinant();
  const auto nodes = linspace({-1, 1}, kDesignQuadraturePoints);
  const auto w = simpson_weights(kDesignQuadraturePoints, {-1, 1});
  double total = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = 0; b < nodes.size(); ++b)
      for (std::size_t c = 0; c < nodes.size(); ++c)
        total += w[a] * w[b] * w[c] * normal3_density(prec, det, nodes[a], nodes[b], nodes[c]);
  return cache.emplace(correlated, total).first->second;
}

/// Integrates g(x) f_X(x) over the coordinates other than j with x_j fixed.
template <class Fn>
double slice_integral(bool correlated, std::size_t j, double xj, Fn&& g) {
  const Eigen::Matrix3d cov = SimModel{correlated}.covariance();
  const Eigen::Matrix3d prec = cov.inverse();
  const double det = cov.determinant();
  const auto nodes = linspace({-1, 1}, kDesignQuadraturePoints);
  const auto w = simpson_weights(kDesignQuadraturePoints, {-1, 1});
  double total = 0.0;
  std::array<double, 3> x{};
  x[j] = xj;
  const std::size_t p = (j + 1) % 3;
  const std::size_t q = (j + 2) % 3;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      x[p] = nodes[a];
      x[q] = nodes[b];
      total += w[a] * w[b] * g(std::span<const double>(x)) *
               normal3_density(prec, det, x[0], x[1], x[2]);
    }
  return total / design_mass(correlated);
}

}  // namespace detail

/// Marginal design density f_{X_j}(x).
inline double design_marginal_density(std::size_t j, double x, const SimModel& model) {
  return detail::slice_integral(model.correlated, j, x, [](std::span<const double>) { return 1.0; });
}

/// Joint density f_{eps, X_j}(0, x) of the quantile-centred error and X_j.
inline double error_joint_density(std::size_t j, double x, double alpha, const SimModel& model) {
  return detail::slice_integral(model.correlated, j, x,
                                [alpha](std::span<const double> v) { return oracle_weight(v, alpha); });
}

/// First-order asymptotic variance of the j-th component estimate at an
/// interior point x:
///   alpha (1 - alpha) f_{X_j}(x) int K^2 / (f_{eps,X_j}(0, x)^2 n h).
/// Points closer than one bandwidth to an interval end are rejected.
inline double asymptotic_variance(double x, std::size_t j, double alpha, std::size_t n, double h,
                                  const SimModel& model) {
  check_level(alpha);
  if (j >= 3) throw std::out_of_range("asymptotic_variance: component index");
  if (!(h > 0.0) || n == 0) throw std::invalid_argument("asymptotic_variance: need n >= 1, h > 0");
  if (x - h < -1.0 || x + h > 1.0)
    throw std::domain_error("asymptotic_variance: point within one bandwidth of the boundary");
  const double fx = design_marginal_density(j, x, model);
  const double fe = error_joint_density(j, x, alpha, model);
  return alpha * (1.0 - alpha) * fx * epanechnikov_roughness /
         (fe * fe * static_cast<double>(n) * h);
}

}  // namespace aqr

#endif  // AQR_SIM_MODEL_HPP
