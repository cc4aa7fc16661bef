// Draws one DGP1 panel sample and prints every panel estimator with its
// standard error and confidence interval.

#include <cstdio>

#include "drdid/drdid.hpp"

int main() {
  using namespace drdid;
  DgpSpec spec;
  spec.dgp_id = 1;
  spec.n = 1000;
  spec.seed = 42;
  RngStream rng(spec.seed, 0, stream::data);
  const PanelDataset data = gen_dgp_panel(spec, rng);

  EstimatorOptions opts;
  opts.bootstrap_draws = 0;
  for (auto tag : kPanelEstimators) {
    const AttEstimate e = estimate_panel(tag, data, opts);
    std::printf("%-8s att %+8.4f  se %7.4f  ci [%+8.4f, %+8.4f]  (%s)\n", e.method.c_str(), e.att, e.se, e.ci.first,
                e.ci.second, e.diagnostics.se_method.c_str());
  }
}
