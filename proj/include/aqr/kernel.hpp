#ifndef AQR_KERNEL_HPP
#define AQR_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aqr/numeric.hpp"

namespace aqr {

/// Base kernel family. Any added member must be a symmetric density on
/// [-1, 1] with a closed-form CDF, and must be Lipschitz; the boundary
/// correction below relies on the CDF to renormalize on bounded supports.
enum class KernelType { epanechnikov };

/// K(t) = 0.75 (1 - t^2) on [-1, 1].
inline double epanechnikov(double t) {
  return std::abs(t) <= 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
}

/// CDF of the Epanechnikov kernel, argument clipped to [-1, 1].
inline double epanechnikov_cdf(double t) {
  t = std::clamp(t, -1.0, 1.0);
  return 0.5 + 0.75 * t - 0.25 * t * t * t;
}

/// Integral of K(t)^2 over the real line.
inline constexpr double epanechnikov_roughness = 0.6;

inline double base_kernel(double t, KernelType type = KernelType::epanechnikov) {
  switch (type) {
    case KernelType::epanechnikov:
      return epanechnikov(t);
  }
  return 0.0;
}

inline double base_kernel_cdf(double t, KernelType type = KernelType::epanechnikov) {
  switch (type) {
    case KernelType::epanechnikov:
      return epanechnikov_cdf(t);
  }
  return 0.0;
}

/// Boundary-corrected kernel on a bounded support.
///
/// For a data point u the curve x -> K_g(x, u) = K((x-u)/g) / (g M(u)) is a
/// probability density on [lo, hi]; M(u) is the share of the scaled kernel
/// mass falling inside the support. Immutable after construction.
class KernelSpec {
 public:
  KernelSpec(double bandwidth, Interval support, KernelType type = KernelType::epanechnikov)
      : bandwidth_(bandwidth), support_(support), type_(type) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("KernelSpec: bandwidth must be positive");
    if (!(support.lo < support.hi)) throw std::invalid_argument("KernelSpec: empty support");
  }

  double bandwidth() const { return bandwidth_; }
  Interval support() const { return support_; }
  KernelType type() const { return type_; }

  /// Mass of the scaled kernel centred at u inside the support.
  double mass(double u) const {
    check_point(u);
    return base_kernel_cdf((support_.hi - u) / bandwidth_, type_) -
           base_kernel_cdf((support_.lo - u) / bandwidth_, type_);
  }

  /// K_g(x, u); zero whenever |x - u| > g.
  double operator()(double x, double u) const {
    check_point(u);
    const double k = base_kernel((x - u) / bandwidth_, type_);
    if (k == 0.0) return 0.0;
    return k / (bandwidth_ * mass(u));
  }

  /// Integral of t -> K_g(t, u) from the lower support end to x.
  double cdf(double x, double u) const {
    const double lower = base_kernel_cdf((support_.lo - u) / bandwidth_, type_);
    const double upper = base_kernel_cdf((support_.hi - u) / bandwidth_, type_);
    const double at = base_kernel_cdf((std::min(x, support_.hi) - u) / bandwidth_, type_);
    return std::clamp((at - lower) / (upper - lower), 0.0, 1.0);
  }

  /// Point t with cdf(t, u) = p, by bisection on the kernel support.
  double inverse_cdf(double u, double p) const {
    check_point(u);
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_cdf: p must lie in (0, 1)");
    double lo = std::max(support_.lo, u - bandwidth_);
    double hi = std::min(support_.hi, u + bandwidth_);
    // 50 halvings shrink the bracket to ~2e-15 g, well inside the 1e-10 target.
    for (int iter = 0; iter < 50; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (cdf(mid, u) < p)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// Grid indices [first, last] whose nodes lie within one bandwidth of u.
  std::pair<std::size_t, std::size_t> support_range(std::span<const double> grid,
                                                    double u) const {
    auto first = static_cast<std::size_t>(
        std::lower_bound(grid.begin(), grid.end(), u - bandwidth_) - grid.begin());
    auto last = static_cast<std::size_t>(
        std::upper_bound(grid.begin(), grid.end(), u + bandwidth_) - grid.begin());
    return {first, last == 0 ? 0 : last - 1};
  }

 private:
  void check_point(double u) const {
    if (!support_.contains(u))
      throw std::domain_error("KernelSpec: data point outside the support interval");
  }

  double bandwidth_;
  Interval support_;
  KernelType type_;
};

/// Kernel density estimate n^-1 sum_i w_i K_g(x, X_i) on `grid`.
/// Empty `weights` means unit weights.
inline std::vector<double> kde_marginal(std::span<const double> samples, const KernelSpec& spec,
                                        std::span<const double> grid,
                                        std::span<const double> weights = {}) {
  if (samples.empty()) throw std::invalid_argument("kde_marginal: empty sample");
  if (!weights.empty() && weights.size() != samples.size())
    throw std::invalid_argument("kde_marginal: weight/sample size mismatch");
  for (double w : weights)
    if (w < 0.0) throw std::invalid_argument("kde_marginal: negative weight");
  for (double x : grid)
    if (!spec.support().contains(x)) throw std::domain_error("kde_marginal: grid outside support");

  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    const auto [first, last] = spec.support_range(grid, samples[i]);
    for (std::size_t g = first; g <= last && g < grid.size(); ++g)
      out[g] += w * spec(grid[g], samples[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (double& v : out) v *= inv_n;
  return out;
}

/// Weighted product-kernel density estimate on grid_j x grid_l.
inline Matrix weighted_kde_pairwise(std::span<const double> samples_j,
                                    std::span<const double> samples_l, const KernelSpec& spec_j,
                                    const KernelSpec& spec_l, std::span<const double> grid_j,
                                    std::span<const double> grid_l,
                                    std::span<const double> weights) {
  const std::size_t n = samples_j.size();
  if (n == 0) throw std::invalid_argument("weighted_kde_pairwise: empty sample");
  if (samples_l.size() != n || weights.size() != n)
    throw std::invalid_argument("weighted_kde_pairwise: length mismatch");
  for (double w : weights)
    if (w < 0.0) throw std::invalid_argument("weighted_kde_pairwise: negative weight");

  Matrix out(grid_j.size(), grid_l.size());
  std::vector<double> kl(grid_l.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const auto [fj, lj] = spec_j.support_range(grid_j, samples_j[i]);
    const auto [fl, ll] = spec_l.support_range(grid_l, samples_l[i]);
    for (std::size_t b = fl; b <= ll && b < grid_l.size(); ++b)
      kl[b] = spec_l(grid_l[b], samples_l[i]);
    for (std::size_t a = fj; a <= lj && a < grid_j.size(); ++a) {
      const double kj = weights[i] * spec_j(grid_j[a], samples_j[i]);
      if (kj == 0.0) continue;
      for (std::size_t b = fl; b <= ll && b < grid_l.size(); ++b) out(a, b) += kj * kl[b];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t a = 0; a < out.rows(); ++a)
    for (double& v : out.row(a)) v *= inv_n;
  return out;
}

}  // namespace aqr

#endif  // AQR_KERNEL_HPP
