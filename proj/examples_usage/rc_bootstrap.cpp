// Repeated cross-section estimators on a DGP1 sample. DR estimators report
// influence-function SEs; the multiplier bootstrap cross-checks them and
// supplies the SEs of the comparison estimators.

#include <cstdio>

#include "drdid/drdid.hpp"

int main() {
  using namespace drdid;
  DgpSpec spec;
  spec.dgp_id = 1;
  spec.design = Design::Rc;
  spec.n = 2000;
  spec.lambda = 0.5;
  spec.seed = 7;
  RngStream rng(spec.seed, 0, stream::data);
  const RcDataset data = gen_dgp_rc(spec, rng);

  EstimatorOptions opts;
  opts.bootstrap_draws = 0;
  for (const char* tag : {"dr1", "dr2", "dr1_imp", "dr2_imp"}) {
    const AttEstimate a = estimate_rc(tag, data, opts);
    const BootstrapResult b = multiplier_bootstrap(
        [&](std::span<const double> v) {
          Vector w(data.weights.begin(), data.weights.end());
          for (std::size_t i = 0; i < w.size(); ++i) w[i] *= v[i];
          return estimate_rc(tag, data.reweighted(w), opts).att;
        },
        data.n(), 499, 11);
    std::printf("%-8s att %+8.4f  influence se %7.4f  bootstrap se %7.4f\n", tag, a.att, a.se, b.se);
  }

  opts.bootstrap_draws = 499;
  opts.seed = 11;
  for (const char* tag : {"or", "ipw", "ipw_std"}) {
    const AttEstimate e = estimate_rc(tag, data, opts);
    std::printf("%-8s att %+8.4f  bootstrap se %7.4f\n", tag, e.att, e.se);
  }
}
