#ifndef AQR_QUANTILE_HPP
#define AQR_QUANTILE_HPP

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace aqr {

inline void check_level(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("quantile level must lie in (0, 1)");
}

/// Check loss tau_alpha(u) = u (alpha - 1{u < 0}).
inline double check_loss(double u, double alpha) {
  return u < 0.0 ? u * (alpha - 1.0) : u * alpha;
}

/// Weighted check-loss minimization over a scalar location parameter.
class CheckLossProblem {
 public:
  CheckLossProblem(std::vector<double> residuals, std::vector<double> weights, double alpha)
      : residuals_(std::move(residuals)), weights_(std::move(weights)), alpha_(alpha) {
    if (residuals_.empty()) throw std::invalid_argument("CheckLossProblem: empty residuals");
    if (weights_.size() != residuals_.size())
      throw std::invalid_argument("CheckLossProblem: weight/residual size mismatch");
    check_level(alpha_);
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw std::invalid_argument("CheckLossProblem: negative weight");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("CheckLossProblem: zero total weight");
  }

  std::span<const double> residuals() const { return residuals_; }
  std::span<const double> weights() const { return weights_; }
  double alpha() const { return alpha_; }

 private:
  std::vector<double> residuals_;
  std::vector<double> weights_;
  double alpha_;
};

/// sum_i w_i tau_alpha(r_i - theta).
inline double check_objective(double theta, const CheckLossProblem& problem) {
  const auto r = problem.residuals();
  const auto w = problem.weights();
  double sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) sum += w[i] * check_loss(r[i] - theta, problem.alpha());
  return sum;
}

/// Smallest minimizer of the weighted check loss: the first residual, in
/// ascending order, whose cumulative weight reaches alpha times the total.
/// Totals are summed in sorted order so that the threshold and the running
/// sum see identical rounding.
inline double weighted_quantile(const CheckLossProblem& problem) {
  const auto r = problem.residuals();
  const auto w = problem.weights();
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r[a] < r[b]; });

  double total = 0.0;
  for (std::size_t k : order) total += w[k];
  const double target = problem.alpha() * total;

  double cumulative = 0.0;
  for (std::size_t k : order) {
    if (w[k] == 0.0) continue;
    cumulative += w[k];
    if (cumulative >= target) return r[k];
  }
  return r[order.back()];
}

}  // namespace aqr

#endif  // AQR_QUANTILE_HPP
