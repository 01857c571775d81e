// Simulate a sample, fit BF and SBF at the median and print a few component values.
#include <cstdio>
#include <vector>

#include "aqr/backfit.hpp"
#include "aqr/bench.hpp"
#include "aqr/sim_model.hpp"

int main() {
  aqr::Rng rng = aqr::replication_rng(7, 0);
  aqr::Dataset data;
  data.x = aqr::gen_covariates(200, false, rng);
  data.y = aqr::gen_response(data.x, rng).y;
  data.intervals = aqr::SimModel::intervals();

  const std::vector<double> h(3, 0.5);
  const auto bf = aqr::fit_bf(data, 0.5, h);
  const auto sbf = aqr::fit_sbf_grid(data, 0.5, h);
  const aqr::SimModel model{false};
  const auto truth = aqr::true_quantile_model(0.5, model);

  std::printf("SBF_grid: %d cycles, converged=%d\n", sbf.iterations_run, sbf.converged);
  std::printf("%6s %3s %10s %10s %10s\n", "x", "j", "BF", "SBF", "true");
  for (std::size_t j = 0; j < 3; ++j)
    for (double x : {-0.5, 0.0, 0.5})
      std::printf("%6.2f %3zu %10.4f %10.4f %10.4f\n", x, j + 1, aqr::component_value(bf, j, x),
                  aqr::component_value(sbf, j, x), truth.component(j, x));

  aqr::Matrix eval = aqr::gen_covariates(5000, false, rng);
  std::printf("ISE  BF %.4f  SBF %.4f\n", aqr::ise(bf, 0.5, model, eval),
              aqr::ise(sbf, 0.5, model, eval));
}
