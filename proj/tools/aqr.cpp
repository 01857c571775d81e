// aqr: additive quantile regression by (smooth) backfitting.
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aqr/commands.hpp"

namespace {

void add_bench_flags(CLI::App* cmd, aqr::BenchOptions& opt) {
  cmd->add_option("--n", opt.n, "Sample size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", opt.alpha, "Quantile levels")->capture_default_str()->delimiter(',');
  cmd->add_option("--reps", opt.reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--h-grid", opt.h_grid, "Bandwidth grid")->capture_default_str()->delimiter(',');
  cmd->add_flag("--correlated", opt.correlated, "Correlated covariate design");
  cmd->add_option("--methods", opt.methods, "BF, SBF_grid, SBF_pseudo, BF_star, SBF_star")
      ->delimiter(',');
  cmd->add_option("--seed", opt.seed, "Master seed (default: $AQR_SEED, else 1)");
  cmd->add_option("--eval-points", opt.eval_points, "Monte-Carlo points per ISE")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", opt.jobs, "Worker threads (default: all cores)");
  cmd->add_option("--grid-size", opt.grid_size, "Grid nodes per component")->capture_default_str();
  cmd->add_option("--max-cycles", opt.max_cycles, "Backfitting cycle cap")->capture_default_str();
  cmd->add_option("--tol", opt.tol, "Relative convergence tolerance")->capture_default_str();
  cmd->add_option("--pseudo-j", opt.pseudo_J, "Pseudo-observations per point")->capture_default_str();
  cmd->add_option("-o,--output-dir", opt.output_dir, "Output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Additive quantile regression by backfitting"};
  app.require_subcommand(1);

  aqr::FitOptions fit;
  std::string fit_method;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an additive quantile model to a CSV file");
  fit_cmd->add_option("input", fit.input, "CSV with header; y first, then x1..xd")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--alpha", fit.alpha, "Quantile level")->capture_default_str();
  fit_cmd->add_option("--bandwidth", fit.bandwidths, "Bandwidth, or one per covariate")
      ->capture_default_str()
      ->delimiter(',');
  fit_cmd->add_option("--method", fit_method, "BF, SBF_grid or SBF_pseudo (default by dimension)");
  fit_cmd->add_option("--intervals", fit.intervals, "Supports as lo:hi,lo:hi,...");
  fit_cmd->add_option("--grid-size", fit.config.grid_size, "Grid nodes")->capture_default_str();
  fit_cmd->add_option("--max-cycles", fit.config.max_cycles, "Cycle cap")->capture_default_str();
  fit_cmd->add_option("--tol", fit.config.tol, "Relative convergence tolerance")->capture_default_str();
  fit_cmd->add_option("--pseudo-j", fit.config.pseudo_J, "Pseudo-observations per point")
      ->capture_default_str();
  fit_cmd->add_flag("--allow-dead-points", fit.config.allow_dead_points,
                    "Keep empty grid nodes instead of failing");
  fit_cmd->add_option("-o,--output-dir", fit.output_dir, "Output directory")->capture_default_str();

  aqr::SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a sample from the simulation model");
  sim_cmd->add_option("--n", sim.n, "Sample size")->capture_default_str()->check(CLI::PositiveNumber);
  sim_cmd->add_flag("--correlated", sim.correlated, "Correlated covariate design");
  sim_cmd->add_option("--seed", sim.seed, "Seed (default: $AQR_SEED, else 1)");
  sim_cmd->add_option("-o,--output", sim.output, "Output CSV")->capture_default_str();

  aqr::BenchOptions t1, t2, qq, sweep;
  auto* t1_cmd = app.add_subcommand("table1", "MISE at the optimal bandwidth per method and level");
  add_bench_flags(t1_cmd, t1);
  auto* t2_cmd = app.add_subcommand("table2", "Paired ISE differences BF - SBF");
  add_bench_flags(t2_cmd, t2);
  auto* qq_cmd = app.add_subcommand("qq", "Normal Q-Q data for a component value");
  qq.alpha = {0.5};
  qq.h_grid = {0.5};
  qq.correlated = true;
  add_bench_flags(qq_cmd, qq);
  qq_cmd->add_option("--component", qq.qq_component, "Component (1-3)")->capture_default_str();
  qq_cmd->add_option("--point", qq.qq_point, "Evaluation point")->capture_default_str();
  qq_cmd->add_flag("!--uncorrelated", qq.correlated, "Uncorrelated covariate design");
  auto* sweep_cmd = app.add_subcommand("bandwidth-sweep", "MISE against bandwidth");
  sweep.alpha = {0.5};
  sweep.h_grid = {0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7};
  add_bench_flags(sweep_cmd, sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*fit_cmd) {
      if (!fit_method.empty()) fit.method = aqr::method_from_string(fit_method);
      aqr::cmd_fit(fit, std::cout);
    } else if (*sim_cmd) {
      aqr::cmd_simulate(sim, std::cout);
    } else if (*t1_cmd) {
      aqr::cmd_table1(t1, std::cout);
    } else if (*t2_cmd) {
      aqr::cmd_table2(t2, std::cout);
    } else if (*qq_cmd) {
      aqr::cmd_qq(qq, std::cout);
    } else if (*sweep_cmd) {
      aqr::cmd_bandwidth_sweep(sweep, std::cout);
    }
  } catch (const aqr::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
