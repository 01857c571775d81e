#ifndef AQR_NUMERIC_HPP
#define AQR_NUMERIC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqr {

/// Closed support interval [lo, hi] of one covariate.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Dense row-major matrix; rows are observations, columns coordinates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// `count` equidistant points spanning [iv.lo, iv.hi], endpoints exact.
inline std::vector<double> linspace(Interval iv, std::size_t count) {
  if (count < 2) throw std::invalid_argument("linspace: need at least 2 points");
  std::vector<double> out(count);
  const double step = iv.length() / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) out[k] = iv.lo + step * static_cast<double>(k);
  out.back() = iv.hi;
  return out;
}

/// Trapezoid quadrature weights for an increasing grid.
inline std::vector<double> trapezoid_weights(std::span<const double> grid) {
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double half = 0.5 * (grid[k + 1] - grid[k]);
    w[k] += half;
    w[k + 1] += half;
  }
  return w;
}

inline double trapezoid(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size())
    throw std::invalid_argument("trapezoid: grid/value size mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    sum += 0.5 * (grid[k + 1] - grid[k]) * (values[k] + values[k + 1]);
  return sum;
}

/// Bracketing cell of `x` on an equidistant grid: left index and fraction in [0,1].
struct GridCell {
  std::size_t index = 0;
  double frac = 0.0;
};

inline GridCell locate(std::span<const double> grid, double x) {
  const std::size_t last = grid.size() - 1;
  const double step = (grid[last] - grid[0]) / static_cast<double>(last);
  double pos = (x - grid[0]) / step;
  pos = std::clamp(pos, 0.0, static_cast<double>(last));
  auto k = static_cast<std::size_t>(pos);
  if (k >= last) return {last, 0.0};
  // A value sitting on a node must reproduce the node exactly.
  if (x == grid[k + 1]) return {k + 1, 0.0};
  return {k, pos - static_cast<double>(k)};
}

inline double interpolate(std::span<const double> values, GridCell cell) {
  if (cell.frac == 0.0) return values[cell.index];
  return values[cell.index] + cell.frac * (values[cell.index + 1] - values[cell.index]);
}

/// Linear interpolation of tabulated `values` on an equidistant `grid`.
inline double interpolate(std::span<const double> grid, std::span<const double> values,
                          double x) {
  return interpolate(values, locate(grid, x));
}

/// Empirical quantile with linear interpolation between order statistics (type 7).
inline double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= values.size()) return values.back();
  return values[k] + (pos - static_cast<double>(k)) * (values[k + 1] - values[k]);
}

inline double interquartile_range(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  return empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
}

}  // namespace aqr

#endif  // AQR_NUMERIC_HPP
