// Monte Carlo semiparametric efficiency bounds for DGP1 and DGP2.

#include <cstdio>

#include "drdid/drdid.hpp"

int main() {
  using namespace drdid;
  const std::size_t draws = 200000;
  for (int id = 1; id <= 2; ++id) {
    const OracleDgp dgp = oracle_dgp(id);
    const McValue panel = eff_bound_panel(dgp, draws, 1);
    const McValue rc = eff_bound_rc(dgp, 0.5, draws, 1);
    const OptimalLambda opt = optimal_lambda(dgp, draws, 1);
    std::printf("dgp%d panel %.3f (%.3f)  rc %.3f (%.3f)  optimal lambda %.4f\n", id, panel.value, panel.mc_se,
                rc.value, rc.mc_se, opt.lambda);
  }
}
