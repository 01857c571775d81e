#ifndef AQR_COMMANDS_HPP
#define AQR_COMMANDS_HPP

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aqr/backfit.hpp"
#include "aqr/bench.hpp"
#include "aqr/io.hpp"
#include "aqr/mean_backfit.hpp"
#include "aqr/sim_model.hpp"

namespace aqr {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Seed from the flag, else AQR_SEED, else 1.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("AQR_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("AQR_SEED is not an unsigned integer: ") + env);
    }
  }
  return 1;
}

inline unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// "a:b,c:d" -> intervals.
inline std::vector<Interval> parse_intervals(const std::string& text) {
  std::vector<Interval> out;
  if (text.empty()) return out;
  for (const auto& part : split_csv_line(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw UsageError("interval '" + part + "' is not of the form lo:hi");
    auto lo = parse_double(part.substr(0, colon));
    auto hi = parse_double(part.substr(colon + 1));
    if (!lo || !hi || !(*lo < *hi)) throw UsageError("invalid interval '" + part + "'");
    out.push_back({*lo, *hi});
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ------------------------------------------------------------------ fit

struct FitOptions {
  std::string input;
  double alpha = 0.5;
  std::vector<double> bandwidths{0.5};
  std::optional<Method> method;
  std::string intervals;
  std::filesystem::path output_dir = ".";
  FitConfig config;
};

/// SBF_grid for up to three covariates, SBF_pseudo beyond.
inline Method default_fit_method(std::size_t d) { return d <= 3 ? Method::sbf_grid : Method::sbf_pseudo; }

inline AdditiveFit cmd_fit(const FitOptions& opt, std::ostream& log) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  const Dataset data = dataset_from_csv(read_csv_file(opt.input), parse_intervals(opt.intervals));
  const std::size_t d = data.dimension();
  std::vector<double> bw = opt.bandwidths;
  if (bw.size() == 1 && d > 1) bw.assign(d, bw.front());
  if (bw.size() != d) throw UsageError("--bandwidth needs one value or one per covariate");
  const Method method = opt.method.value_or(default_fit_method(d));
  if (method == Method::bf_star || method == Method::sbf_star)
    throw UsageError("fit: BF_star/SBF_star need oracle weights and are only available in benchmarks");

  const AdditiveFit fit = fit_quantile(method, data, opt.alpha, bw, opt.config);
  write_text(opt.output_dir / "fit.json", fit_to_json(fit).dump(2) + "\n");
  std::ostringstream curves;
  write_curves_csv(curves, fit);
  write_text(opt.output_dir / "curves.csv", curves.str());

  log << "method " << to_string(method) << ", alpha " << opt.alpha << ", n " << data.size()
      << ", d " << d << "\n"
      << (fit.converged ? "converged" : "not converged") << " after " << fit.iterations_run
      << " cycles (last change "
      << (fit.cycle_changes.empty() ? 0.0 : fit.cycle_changes.back()) << ")\n"
      << "m0 " << fit.m0 << "\n";
  return fit;
}

// ------------------------------------------------------------------ simulate

struct SimulateOptions {
  std::size_t n = 200;
  bool correlated = false;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output = "sim.csv";
};

inline Dataset cmd_simulate(const SimulateOptions& opt, std::ostream& log) {
  if (opt.n < 1) throw UsageError("--n must be positive");
  Rng rng = replication_rng(resolve_seed(opt.seed), 0);
  Dataset data;
  data.x = gen_covariates(opt.n, opt.correlated, rng);
  data.y = gen_response(data.x, rng).y;
  data.intervals = SimModel::intervals();
  std::ostringstream out;
  write_dataset_csv(out, data);
  write_text(opt.output, out.str());
  log << "wrote " << opt.n << " observations to " << opt.output.string() << "\n";
  return data;
}

// ------------------------------------------------------------------ benchmarks

struct BenchOptions {
  std::size_t n = 200;
  std::vector<double> alpha{0.2, 0.5, 0.8};
  std::size_t reps = 200;
  std::vector<double> h_grid{0.3, 0.4, 0.5, 0.6, 0.7};
  bool correlated = false;
  std::vector<std::string> methods;
  std::optional<std::uint64_t> seed;
  std::size_t eval_points = 5000;
  unsigned jobs = 0;
  std::size_t grid_size = 41;
  int max_cycles = 50;
  double tol = 1e-4;
  std::size_t pseudo_J = 10;
  std::size_t qq_component = 2;
  double qq_point = 0.0;
  std::filesystem::path output_dir = ".";
};

inline BenchConfig bench_config(const BenchOptions& opt, std::vector<Method> default_methods) {
  BenchConfig c;
  c.n = opt.n;
  c.correlated = opt.correlated;
  c.alpha_levels = opt.alpha;
  c.replications = opt.reps;
  c.bandwidth_grid = opt.h_grid;
  c.methods = default_methods;
  if (!opt.methods.empty()) {
    c.methods.clear();
    for (const auto& m : opt.methods) {
      try {
        c.methods.push_back(method_from_string(m));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
  }
  c.seed = resolve_seed(opt.seed);
  c.eval_points = opt.eval_points;
  c.jobs = opt.jobs == 0 ? default_jobs() : opt.jobs;
  c.fit.grid_size = opt.grid_size;
  c.fit.max_cycles = opt.max_cycles;
  c.fit.tol = opt.tol;
  c.fit.pseudo_J = opt.pseudo_J;
  try {
    c.validate();
  } catch (const std::logic_error& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline void write_records(const BenchOptions& opt, const BenchReport& report) {
  std::ostringstream csv;
  write_records_csv(csv, report);
  write_text(opt.output_dir / "ise.csv", csv.str());
}

inline void print_table1(std::ostream& log, const BenchReport& report) {
  log << "method";
  for (double a : report.config.alpha_levels) log << "\talpha=" << a;
  log << "\n";
  for (Method m : report.config.methods) {
    log << to_string(m);
    for (double a : report.config.alpha_levels) {
      const auto* c = report.optimal_for(m, a);
      log << "\t" << c->mise << " (h=" << c->h << ")";
    }
    log << "\n";
  }
}

inline BenchReport cmd_table1(const BenchOptions& opt, std::ostream& log) {
  const auto config = bench_config(
      opt, {Method::bf, Method::bf_star, Method::sbf_grid, Method::sbf_star});
  const BenchReport report = run_benchmark(config);
  write_records(opt, report);
  write_text(opt.output_dir / "table1.json", table1_json(report).dump(2) + "\n");
  print_table1(log, report);
  return report;
}

inline BenchReport cmd_table2(const BenchOptions& opt, std::ostream& log) {
  const auto config = bench_config(opt, {Method::bf, Method::sbf_grid});
  const BenchReport report = run_benchmark(config);
  write_records(opt, report);
  write_text(opt.output_dir / "table2.json", table2_json(report).dump(2) + "\n");
  for (const auto& d : report.diffs)
    log << "alpha=" << d.alpha << "\tDIFF " << d.stats.mean << " (" << d.stats.se << ")\n";
  return report;
}

inline BenchReport cmd_qq(const BenchOptions& opt, std::ostream& log) {
  auto config = bench_config(opt, {Method::bf, Method::sbf_grid});
  if (opt.qq_component < 1 || opt.qq_component > 3) throw UsageError("--component must be 1, 2 or 3");
  for (Method m : config.methods)
    config.qq.push_back({m, opt.qq_component - 1, opt.qq_point, config.alpha_levels.front(),
                         config.bandwidth_grid.front()});
  const BenchReport report = run_benchmark(config);
  std::ostringstream csv;
  write_qq_csv(csv, report);
  write_text(opt.output_dir / "qq.csv", csv.str());
  write_text(opt.output_dir / "qq.json", qq_json(report).dump(2) + "\n");
  for (const auto& s : report.qq)
    log << to_string(s.request.method) << "\tQ-Q correlation " << s.correlation << "\n";
  return report;
}

inline BenchReport cmd_bandwidth_sweep(const BenchOptions& opt, std::ostream& log) {
  const auto config = bench_config(opt, {Method::bf, Method::sbf_grid});
  const BenchReport report = run_benchmark(config);
  std::ostringstream csv;
  write_mise_csv(csv, report);
  write_text(opt.output_dir / "mise.csv", csv.str());
  const json summary = sweep_json(report);
  write_text(opt.output_dir / "sweep.json", summary.dump(2) + "\n");
  for (const auto& b : summary["optimal"])
    log << b["method"].get<std::string>() << "\talpha=" << b["alpha"].get<double>()
        << "\toptimal h " << b["h"].get<double>() << "\tMISE " << b["mise"].get<double>() << "\n";
  return report;
}

}  // namespace aqr

#endif  // AQR_COMMANDS_HPP
