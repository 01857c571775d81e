#ifndef AQR_BENCH_HPP
#define AQR_BENCH_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "aqr/backfit.hpp"
#include "aqr/mean_backfit.hpp"
#include "aqr/sim_model.hpp"

namespace aqr {

/// Mean and standard error of paired differences a_r - b_r; the error uses
/// the (R - 1) R denominator.
struct DiffStats {
  double mean = 0.0;
  double se = 0.0;
};

inline DiffStats diff_se(std::span<const double> ise_a, std::span<const double> ise_b) {
  if (ise_a.size() != ise_b.size()) throw std::invalid_argument("diff_se: unpaired inputs");
  const std::size_t R = ise_a.size();
  if (R < 2) throw std::invalid_argument("diff_se: need at least two replications");
  std::vector<double> diff(R);
  double sum = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    diff[r] = ise_a[r] - ise_b[r];
    sum += diff[r];
  }
  DiffStats out;
  out.mean = sum / static_cast<double>(R);
  double ss = 0.0;
  for (double v : diff) ss += (v - out.mean) * (v - out.mean);
  out.se = std::sqrt(ss / (static_cast<double>(R - 1) * static_cast<double>(R)));
  return out;
}

struct QQPoint {
  double theoretical = 0.0;
  double sample = 0.0;
};

/// Normal Q-Q pairs: sorted standardized values against Phi^-1((r - 0.5) / R).
inline std::vector<QQPoint> qq_data(std::span<const double> values) {
  const std::size_t R = values.size();
  if (R < 3) throw std::invalid_argument("qq_data: need at least three values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(R);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(R - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("qq_data: zero-variance input");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<QQPoint> out(R);
  for (std::size_t r = 0; r < R; ++r) {
    out[r].theoretical = normal_quantile((static_cast<double>(r) + 0.5) / static_cast<double>(R));
    out[r].sample = (sorted[r] - mean) / sd;
  }
  return out;
}

/// Pearson correlation of the Q-Q pairs.
inline double qq_correlation(std::span<const QQPoint> points) {
  const double n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : points) {
    mx += p.theoretical;
    my += p.sample;
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (const auto& p : points) {
    sxy += (p.theoretical - mx) * (p.sample - my);
    sxx += (p.theoretical - mx) * (p.theoretical - mx);
    syy += (p.sample - my) * (p.sample - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Collect m_hat_j(point) of `method` at (alpha, h) in every replication.
struct QQRequest {
  Method method = Method::sbf_grid;
  std::size_t component = 1;
  double point = 0.0;
  double alpha = 0.5;
  double h = 0.5;
};

struct BenchConfig {
  std::size_t n = 200;
  bool correlated = false;
  std::vector<double> alpha_levels{0.5};
  std::size_t replications = 1;
  std::vector<double> bandwidth_grid{0.5};
  std::vector<Method> methods{Method::bf, Method::sbf_grid};
  std::uint64_t seed = 1;
  std::size_t eval_points = 5000;
  FitConfig fit;
  unsigned jobs = 1;
  std::vector<QQRequest> qq;
  double max_failure_rate = 0.05;

  void validate() const {
    if (n < 2) throw std::invalid_argument("BenchConfig: n must be >= 2");
    if (replications < 1) throw std::invalid_argument("BenchConfig: replications must be >= 1");
    if (alpha_levels.empty() || bandwidth_grid.empty() || methods.empty())
      throw std::invalid_argument("BenchConfig: empty alpha, bandwidth or method list");
    for (double a : alpha_levels) check_level(a);
    for (double h : bandwidth_grid)
      if (!(h > 0.0)) throw std::invalid_argument("BenchConfig: bandwidths must be positive");
    if (eval_points < 1) throw std::invalid_argument("BenchConfig: eval_points must be >= 1");
    fit.validate();
  }

  bool has(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }
};

struct IseRecord {
  Method method;
  double alpha;
  double h;
  std::size_t rep;
  double ise;
  bool converged;
  int iterations;
};

struct MiseCell {
  Method method;
  double alpha;
  double h;
  double mise;
  std::size_t count;
};

/// MISE of `method` at the bandwidth picked by its reference method.
struct OptimalCell {
  Method method;
  Method reference;
  double alpha;
  double h;
  double mise;
};

struct DiffCell {
  Method first;
  Method second;
  double alpha;
  double h_first;
  double h_second;
  DiffStats stats;
};

/// Sup-norm distance over interior grid nodes between two fits of the same replication.
struct PairDistance {
  Method first;
  Method second;
  double alpha;
  double h;
  std::size_t rep;
  double sup;
};

struct QQSeries {
  QQRequest request;
  std::vector<double> values;
  std::vector<QQPoint> points;
  double correlation = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<IseRecord> records;
  std::vector<MiseCell> mise;
  std::vector<OptimalCell> optimal;
  std::vector<DiffCell> diffs;
  std::vector<PairDistance> distances;
  std::vector<QQSeries> qq;
  std::vector<std::size_t> failed_replications;
  std::vector<std::string> failure_messages;

  std::optional<double> mise_at(Method m, double alpha, double h) const {
    for (const auto& c : mise)
      if (c.method == m && c.alpha == alpha && c.h == h) return c.mise;
    return std::nullopt;
  }

  const OptimalCell* optimal_for(Method m, double alpha) const {
    for (const auto& c : optimal)
      if (c.method == m && c.alpha == alpha) return &c;
    return nullptr;
  }

  /// Mean pair distance at (alpha, h) across replications.
  std::optional<double> mean_distance(Method a, Method b, double alpha, double h) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& d : distances)
      if (d.first == a && d.second == b && d.alpha == alpha && d.h == h) {
        sum += d.sup;
        ++count;
      }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

/// Independent generator per replication, derived from the master seed.
inline Rng replication_rng(std::uint64_t seed, std::size_t rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

/// Data for one replication: sample, latent noise and evaluation draws.
struct Replication {
  Dataset data;
  std::vector<double> noise;
  Matrix eval_sample;
};

inline Replication make_replication(const BenchConfig& config, std::size_t rep) {
  Rng rng = replication_rng(config.seed, rep);
  Replication out;
  out.data.x = gen_covariates(config.n, config.correlated, rng);
  auto resp = gen_response(out.data.x, rng);
  out.data.y = std::move(resp.y);
  out.data.intervals = SimModel::intervals();
  out.noise = std::move(resp.u);
  out.eval_sample = gen_covariates(config.eval_points, config.correlated, rng);
  return out;
}

namespace detail {

struct ReplicationResult {
  std::vector<IseRecord> records;
  std::vector<PairDistance> distances;
  std::vector<std::vector<double>> qq_values;  // per request; empty if no match
  std::string error;
  bool ok = false;
};

inline double interior_sup_distance(const AdditiveFit& a, const AdditiveFit& b) {
  double sup = 0.0;
  for (std::size_t j = 0; j < a.dimension(); ++j) {
    const double h = a.bandwidths[j];
    for (std::size_t g = 0; g < a.grids[j].size(); ++g) {
      const double x = a.grids[j][g];
      if (x - h < a.intervals[j].lo || x + h > a.intervals[j].hi) continue;
      sup = std::max(sup, std::abs(a.components[j][g] - b.components[j][g]));
    }
  }
  return sup;
}

inline ReplicationResult run_replication(const BenchConfig& config, std::size_t rep) {
  ReplicationResult result;
  result.qq_values.resize(config.qq.size());
  try {
    const Replication data = make_replication(config, rep);
    const SimModel model{config.correlated};
    const bool need_star = config.has(Method::bf_star) || config.has(Method::sbf_star);
    for (double alpha : config.alpha_levels) {
      WeightedDataset wdata;
      if (need_star) {
        auto pr = pseudo_responses(data.data.x, data.noise, alpha, model);
        wdata = WeightedDataset{std::move(pr.z), data.data.x, std::move(pr.weights),
                                data.data.intervals, alpha};
      }
      for (double h : config.bandwidth_grid) {
        const std::vector<double> bw(data.data.dimension(), h);
        std::map<Method, AdditiveFit> fits;
        for (Method m : config.methods) {
          AdditiveFit fit = (m == Method::bf_star)    ? fit_bf_star(wdata, bw, config.fit)
                            : (m == Method::sbf_star) ? fit_sbf_star(wdata, bw, config.fit)
                                                      : fit_quantile(m, data.data, alpha, bw, config.fit);
          result.records.push_back({m, alpha, h, rep, ise(fit, alpha, model, data.eval_sample),
                                    fit.converged, fit.iterations_run});
          for (std::size_t q = 0; q < config.qq.size(); ++q) {
            const auto& req = config.qq[q];
            if (req.method == m && req.alpha == alpha && req.h == h)
              result.qq_values[q].push_back(component_value(fit, req.component, req.point));
          }
          fits.emplace(m, std::move(fit));
        }
        for (auto [a, b] : {std::pair{Method::bf, Method::bf_star},
                            std::pair{Method::sbf_grid, Method::sbf_star}}) {
          auto ia = fits.find(a);
          auto ib = fits.find(b);
          if (ia != fits.end() && ib != fits.end())
            result.distances.push_back(
                {a, b, alpha, h, rep, interior_sup_distance(ia->second, ib->second)});
        }
      }
    }
    result.ok = true;
  } catch (const std::exception& e) {
    result.records.clear();
    result.distances.clear();
    for (auto& v : result.qq_values) v.clear();
    result.error = e.what();
  }
  return result;
}

inline Method bandwidth_reference(Method m, const BenchConfig& config) {
  if (m == Method::bf_star && config.has(Method::bf)) return Method::bf;
  if (m == Method::sbf_star) {
    if (config.has(Method::sbf_grid)) return Method::sbf_grid;
    if (config.has(Method::sbf_pseudo)) return Method::sbf_pseudo;
  }
  return m;
}

}  // namespace detail

/// Monte-Carlo study over replications x alpha levels x bandwidths x methods.
/// Replications run on `config.jobs` threads; aggregation follows replication
/// order so the report does not depend on scheduling.
inline BenchReport run_benchmark(const BenchConfig& config) {
  config.validate();
  const std::size_t R = config.replications;
  std::vector<detail::ReplicationResult> results(R);

  const unsigned jobs = std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(R)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < R; r = next++) results[r] = detail::run_replication(config, r);
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  BenchReport report;
  report.config = config;
  report.qq.resize(config.qq.size());
  for (std::size_t q = 0; q < config.qq.size(); ++q) report.qq[q].request = config.qq[q];
  for (std::size_t r = 0; r < R; ++r) {
    auto& res = results[r];
    if (!res.ok) {
      report.failed_replications.push_back(r);
      report.failure_messages.push_back(res.error);
      continue;
    }
    report.records.insert(report.records.end(), res.records.begin(), res.records.end());
    report.distances.insert(report.distances.end(), res.distances.begin(), res.distances.end());
    for (std::size_t q = 0; q < config.qq.size(); ++q)
      report.qq[q].values.insert(report.qq[q].values.end(), res.qq_values[q].begin(),
                                 res.qq_values[q].end());
  }
  if (static_cast<double>(report.failed_replications.size()) >
      config.max_failure_rate * static_cast<double>(R))
    throw std::runtime_error("run_benchmark: " + std::to_string(report.failed_replications.size()) +
                             " of " + std::to_string(R) + " replications failed; first error: " +
                             report.failure_messages.front());

  // MISE per (method, alpha, h) in configuration order.
  for (Method m : config.methods)
    for (double alpha : config.alpha_levels)
      for (double h : config.bandwidth_grid) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& rec : report.records)
          if (rec.method == m && rec.alpha == alpha && rec.h == h) {
            sum += rec.ise;
            ++count;
          }
        report.mise.push_back({m, alpha, h, count ? sum / static_cast<double>(count) : 0.0, count});
      }

  auto best_h = [&](Method m, double alpha) {
    double h_best = config.bandwidth_grid.front();
    double best = std::numeric_limits<double>::infinity();
    for (double h : config.bandwidth_grid) {
      const double v = *report.mise_at(m, alpha, h);
      if (v < best) {
        best = v;
        h_best = h;
      }
    }
    return h_best;
  };
  for (Method m : config.methods)
    for (double alpha : config.alpha_levels) {
      const Method ref = detail::bandwidth_reference(m, config);
      const double h = best_h(ref, alpha);
      report.optimal.push_back({m, ref, alpha, h, *report.mise_at(m, alpha, h)});
    }

  const std::size_t ok = R - report.failed_replications.size();
  const std::optional<Method> smooth = config.has(Method::sbf_grid)     ? Method::sbf_grid
                                       : config.has(Method::sbf_pseudo) ? std::optional(Method::sbf_pseudo)
                                                                        : std::nullopt;
  if (config.has(Method::bf) && smooth && ok >= 2) {
    for (double alpha : config.alpha_levels) {
      const double h_bf = report.optimal_for(Method::bf, alpha)->h;
      const double h_sbf = report.optimal_for(*smooth, alpha)->h;
      std::map<std::size_t, double> a;
      std::map<std::size_t, double> b;
      for (const auto& rec : report.records) {
        if (rec.alpha != alpha) continue;
        if (rec.method == Method::bf && rec.h == h_bf) a[rec.rep] = rec.ise;
        if (rec.method == *smooth && rec.h == h_sbf) b[rec.rep] = rec.ise;
      }
      std::vector<double> va;
      std::vector<double> vb;
      for (const auto& [rep, v] : a) {
        va.push_back(v);
        vb.push_back(b.at(rep));
      }
      report.diffs.push_back({Method::bf, *smooth, alpha, h_bf, h_sbf, diff_se(va, vb)});
    }
  }

  for (auto& series : report.qq) {
    if (series.values.size() < 3) continue;
    try {
      series.points = qq_data(series.values);
      series.correlation = qq_correlation(series.points);
    } catch (const std::invalid_argument&) {
      series.points.clear();
    }
  }
  return report;
}

}  // namespace aqr

#endif  // AQR_BENCH_HPP
