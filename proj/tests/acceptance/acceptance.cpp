// Acceptance checks. Prints one PASS/FAIL line per criterion followed by the
// measured quantities; exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "drdid/drdid.hpp"
#include "../oracles.hpp"

namespace ts = testing_support;
using namespace drdid;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kReps = 1000;
constexpr std::size_t kN = 1000;
constexpr std::size_t kBoundDraws = 1000000;

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "  ok   " : "  MISS ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }
bool within_rel(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

EstimatorOptions mc_estimator_options() {
  EstimatorOptions o;
  o.bootstrap_draws = 0;
  o.threads = 1;
  return o;
}

std::size_t thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Monte Carlo runs shared between criteria.
std::map<std::string, McSummary> mc(int dgp, Design design, const std::vector<std::string>& estimators) {
  static std::map<std::string, std::map<std::string, McSummary>> cache;
  std::string key = std::to_string(dgp) + std::string(to_string(design));
  for (const auto& e : estimators) key += "," + e;
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  DgpSpec spec;
  spec.dgp_id = dgp;
  spec.design = design;
  spec.n = kN;
  spec.lambda = 0.5;
  spec.seed = kSeed;
  McOptions opts;
  opts.reps = kReps;
  opts.threads = thread_count();
  opts.estimator = mc_estimator_options();
  const auto t0 = std::chrono::steady_clock::now();
  const McRun run = run_mc(spec, estimators, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << fmt("[mc] dgp%d %s %zu reps: %.1fs\n", dgp, std::string(to_string(design)).c_str(), kReps, secs);
  std::map<std::string, McSummary> rows;
  for (const auto& r : run.rows) rows[r.estimator] = r;
  cache[key] = rows;
  return rows;
}

std::string row_text(const McSummary& s) {
  return fmt("%-8s bias %+.4f (mc se %.4f) rmse %.4f asyV %.3f cover %.3f fail %zu", s.estimator.c_str(), s.avg_bias,
             s.mc_se_of_bias, s.rmse, s.mean_asy_var, s.coverage, s.failures);
}

const std::vector<std::string> kPanelMc{"twfe", "or", "ipw", "dr", "dr_imp"};
const std::vector<std::string> kRcMc{"twfe", "dr1", "dr2", "dr1_imp", "dr2_imp"};

Outcome criterion1() {
  Outcome o;
  const auto rows = mc(1, Design::Panel, kPanelMc);
  for (const char* tag : {"dr", "dr_imp"}) {
    const McSummary& s = rows.at(tag);
    o.lines.push_back("  " + row_text(s));
    o.check(std::abs(s.avg_bias) <= 0.02, fmt("%s |bias| %.4f <= 0.02", tag, std::abs(s.avg_bias)));
    o.check(within(s.rmse, 0.106, 0.015), fmt("%s rmse %.4f in 0.106 +- 0.015", tag, s.rmse));
    o.check(s.coverage >= 0.93 && s.coverage <= 0.96, fmt("%s coverage %.3f in [0.93, 0.96]", tag, s.coverage));
    o.check(within_rel(s.mean_asy_var, 11.1, 0.15), fmt("%s asy var %.3f within 15%% of 11.1", tag, s.mean_asy_var));
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto d2 = mc(2, Design::Panel, kPanelMc);
  const auto d3 = mc(3, Design::Panel, kPanelMc);
  for (const auto* rows : {&d2, &d3}) {
    const int id = rows == &d2 ? 2 : 3;
    for (const char* tag : {"dr", "dr_imp"}) {
      const McSummary& s = rows->at(tag);
      o.lines.push_back(fmt("  dgp%d ", id) + row_text(s));
      o.check(std::abs(s.avg_bias) <= 3.0 * s.mc_se_of_bias,
              fmt("dgp%d %s |bias| %.4f <= 3 mc se %.4f", id, tag, std::abs(s.avg_bias), 3.0 * s.mc_se_of_bias));
    }
  }
  const McSummary& ipw = d2.at("ipw");
  const McSummary& reg = d3.at("or");
  o.lines.push_back("  dgp2 " + row_text(ipw));
  o.lines.push_back("  dgp3 " + row_text(reg));
  o.check(within(ipw.avg_bias, 2.01, 0.3), fmt("dgp2 ipw bias %.4f in 2.01 +- 0.3", ipw.avg_bias));
  o.check(within(reg.avg_bias, -1.38, 0.2), fmt("dgp3 or bias %.4f in -1.38 +- 0.2", reg.avg_bias));
  return o;
}

Outcome criterion3() {
  Outcome o;
  const McSummary p = mc(1, Design::Panel, kPanelMc).at("twfe");
  const McSummary r = mc(1, Design::Rc, kRcMc).at("twfe");
  o.lines.push_back("  panel " + row_text(p));
  o.lines.push_back("  rc    " + row_text(r));
  o.check(within(p.avg_bias, -20.95, 0.5), fmt("panel twfe bias %.4f in -20.95 +- 0.5", p.avg_bias));
  o.check(within(r.avg_bias, -20.79, 0.6), fmt("rc twfe bias %.4f in -20.79 +- 0.6", r.avg_bias));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const std::size_t threads = thread_count();
  const double panel_ref[] = {11.1, 11.6};
  const double rc_ref[] = {44.4, 46.4};
  for (int id = 1; id <= 2; ++id) {
    const OracleDgp dgp = oracle_dgp(id);
    const McValue pb = eff_bound_panel(dgp, kBoundDraws, kSeed, threads);
    const McValue rb = eff_bound_rc(dgp, 0.5, kBoundDraws, kSeed, threads);
    o.check(within_rel(pb.value, panel_ref[id - 1], 0.02),
            fmt("dgp%d panel bound %.4f (mc se %.4f) within 2%% of %.1f", id, pb.value, pb.mc_se, panel_ref[id - 1]));
    o.check(within_rel(rb.value, rc_ref[id - 1], 0.02),
            fmt("dgp%d rc bound %.4f (mc se %.4f) within 2%% of %.1f", id, rb.value, rb.mc_se, rc_ref[id - 1]));
    for (double lambda : {0.25, 0.5, 0.75}) {
      const McValue r = eff_bound_rc(dgp, lambda, kBoundDraws, kSeed, threads);
      const McValue g = bound_gap_panel_rc(dgp, lambda, kBoundDraws, kSeed, threads);
      const double diff = r.value - pb.value;
      const double joint = std::sqrt(r.mc_se * r.mc_se + pb.mc_se * pb.mc_se + g.mc_se * g.mc_se);
      o.check(std::abs(g.value - diff) <= 3.0 * joint && g.value >= 0.0,
              fmt("dgp%d lambda %.2f gap %.4f vs rc - panel %.4f (3 joint mc se %.4f), gap >= 0", id, lambda, g.value,
                  diff, 3.0 * joint));
    }
  }
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto rows = mc(1, Design::Rc, kRcMc);
  for (const char* tag : {"dr1", "dr2", "dr1_imp", "dr2_imp"}) o.lines.push_back("  " + row_text(rows.at(tag)));
  const McSummary& dr1 = rows.at("dr1");
  const McSummary& dr2 = rows.at("dr2");
  const McSummary& dr1i = rows.at("dr1_imp");
  const McSummary& dr2i = rows.at("dr2_imp");
  o.check(within(dr2.rmse, 0.216, 0.03), fmt("dr2 rmse %.4f in 0.216 +- 0.03", dr2.rmse));
  o.check(within(dr1.rmse, 3.04, 0.4), fmt("dr1 rmse %.4f in 3.04 +- 0.4", dr1.rmse));
  o.check(within_rel(dr2i.mean_asy_var, 44.4, 0.10),
          fmt("dr2_imp asy var %.3f within 10%% of 44.4", dr2i.mean_asy_var));
  const McValue gap = dr1_dr2_gap_rc(oracle_dgp(1), 0.5, kBoundDraws, kSeed, thread_count());
  const double simulated = dr1i.mean_asy_var - dr2i.mean_asy_var;
  o.check(within_rel(gap.value, simulated, 0.05),
          fmt("dr1/dr2 variance gap %.2f (mc se %.2f) within 5%% of simulated %.2f", gap.value, gap.mc_se, simulated));
  return o;
}

Outcome criterion6() {
  Outcome o;
  double worst_panel = 0, worst_rc = 0, worst_moment = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const PanelDataset p = ts::random_panel(500, seed, 4, seed % 2 == 0);
    const PropensityFit ps = fit_logit_ipt(p.x, p.d, p.weights);
    const OutcomeFit f = fit_or_wls(p.x, p.delta_y(), detail::controls_mask(p.d), ps, {0, 0, true}, p.weights);
    const double att = att_dr_imp_panel(p, mc_estimator_options()).att;
    const EifVector with = eif_dr_panel(p, ps, f, att, true);
    const EifVector without = eif_dr_imp_panel(p, ps, f, att);
    worst_panel = std::max(worst_panel, ts::max_abs_diff(with.values, without.values));
    worst_moment = std::max(worst_moment, panel_moments(p, ps, f).sup_norm_all());

    const RcDataset r = ts::random_rc(500, seed, 4, seed % 2 == 1);
    const PropensityFit rps = fit_logit_ipt(r.x, r.d, r.weights);
    const RcOutcomeFits fits = fit_rc_cells(r, &rps, true);
    for (int j = 1; j <= 2; ++j) {
      const double a = detail::dr_rc_value(j, r, rps, fits, r.weights);
      const EifVector w1 = eif_dr_rc(j, r, rps, fits, a, true);
      const EifVector w0 = eif_dr_rc(j, r, rps, fits, a, false);
      worst_rc = std::max(worst_rc, ts::max_abs_diff(w1.values, w0.values));
    }
    worst_moment = std::max(worst_moment, rc_moments(r, rps, fits).sup_norm_all());
  }
  o.check(worst_panel <= 1e-7, fmt("panel improved IF with vs without estimation effect: max %.3g <= 1e-7", worst_panel));
  o.check(worst_rc <= 1e-7, fmt("rc improved IF with vs without estimation effect: max %.3g <= 1e-7", worst_rc));
  o.check(worst_moment <= 1e-7, fmt("first-order moments: max %.3g <= 1e-7", worst_moment));
  return o;
}

Outcome criterion7() {
  Outcome o;
  const EstimatorOptions opts = mc_estimator_options();
  double worst = 0;
  auto panel_vs_oracle = [&](const PanelDataset& p) {
    const ts::PanelOracle r = ts::panel_oracle(p);
    const double oracle[] = {r.twfe, r.or_, r.ipw, r.ipw_std, r.dr, r.dr_imp};
    for (std::size_t i = 0; i < 6; ++i)
      worst = std::max(worst, std::abs(estimate_panel(kPanelEstimators[i], p, opts).att - oracle[i]));
  };
  auto rc_vs_oracle = [&](const RcDataset& d) {
    const ts::RcOracle r = ts::rc_oracle(d);
    const double oracle[] = {r.twfe, r.or_, r.ipw, r.ipw_std, r.dr1, r.dr2, r.dr1_imp, r.dr2_imp};
    for (std::size_t i = 0; i < 8; ++i)
      worst = std::max(worst, std::abs(estimate_rc(kRcEstimators[i], d, opts).att - oracle[i]));
  };
  panel_vs_oracle(ts::six_unit_fixture());
  rc_vs_oracle(ts::twelve_row_fixture());
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    panel_vs_oracle(ts::random_panel(300, seed, 3, seed % 2 == 0));
    rc_vs_oracle(ts::random_rc(400, seed, 3, seed % 2 == 1, 0.4));
  }
  o.check(worst <= 1e-12, fmt("fixtures vs direct-formula oracles: max %.3g <= 1e-12", worst));

  double collapse = 0;
  {
    const PanelDataset raw = ts::random_panel(200, 11, 3);
    const PanelDataset p(raw.y0, raw.y1, raw.d, ts::intercept_only(200));
    double t = 0, c = 0, nt = 0, nc = 0;
    for (std::size_t i = 0; i < 200; ++i) {
      (p.d[i] ? t : c) += p.y1[i] - p.y0[i];
      (p.d[i] ? nt : nc) += 1;
    }
    for (auto tag : kPanelEstimators) collapse = std::max(collapse, std::abs(estimate_panel(tag, p, opts).att - (t / nt - c / nc)));
  }
  auto rc_collapse = [&](const RcDataset& r, bool with_ipw) {
    double s[2][2] = {}, c[2][2] = {};
    for (std::size_t i = 0; i < r.n(); ++i) {
      s[int(r.d[i])][int(r.t[i])] += r.y[i];
      c[int(r.d[i])][int(r.t[i])] += 1;
    }
    const double did = (s[1][1] / c[1][1] - s[1][0] / c[1][0]) - (s[0][1] / c[0][1] - s[0][0] / c[0][0]);
    for (auto tag : kRcEstimators) {
      if (!with_ipw && tag == std::string_view("ipw")) continue;
      collapse = std::max(collapse, std::abs(estimate_rc(tag, r, opts).att - did));
    }
  };
  {
    const RcDataset raw = ts::random_rc(300, 21, 2);
    rc_collapse(RcDataset(raw.y, raw.t, raw.d, ts::intercept_only(300)), false);
    // equal post shares across groups, where the unnormalized estimator also collapses
    const Vector y{3, 5, 1, 2, 9, 4, 2, 4, 7, 1, 6, 3};
    const Vector t{1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0};
    const Vector d{1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0};
    rc_collapse(RcDataset(y, t, d, ts::intercept_only(12)), true);
  }
  o.check(collapse <= 1e-10, fmt("intercept-only collapse to DID: max %.3g <= 1e-10", collapse));
  return o;
}

Outcome criterion8() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const PanelDataset p = ts::random_panel(500, 1000 + seed, 4, seed % 2 == 0);
    const PropensityFit fit = fit_logit_ipt(p.x, p.d, p.weights);
    for (std::size_t j = 0; j < p.k(); ++j) {
      double t = 0, c = 0, st = 0, sc = 0;
      for (std::size_t i = 0; i < p.n(); ++i) {
        const double odds = fit.odds(i);
        t += p.weights[i] * p.d[i] * p.x(i, j);
        st += p.weights[i] * p.d[i];
        c += p.weights[i] * (1 - p.d[i]) * odds * p.x(i, j);
        sc += p.weights[i] * (1 - p.d[i]) * odds;
      }
      worst = std::max(worst, std::abs(t / st - c / sc));
    }
  }
  o.check(worst <= 1e-8, fmt("treated vs reweighted control covariate means over 100 datasets: max %.3g <= 1e-8", worst));
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion9() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / ("drdid_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::vector<std::string> outputs;
  bool ran = true;
  for (int threads : {1, 4, 8}) {
    const auto out = dir / ("sim_" + std::to_string(threads) + ".json");
    const std::string cmd = std::string("\"") + DRDID_CLI_PATH +
                            "\" simulate --dgp 1 --design rc --n 400 --reps 40 --bootstrap-draws 49 --draws 100000"
                            " --seed 7 --threads " +
                            std::to_string(threads) + " --output \"" + out.string() + "\"";
    const int rc = std::system(cmd.c_str());
    ran = ran && rc == 0;
    outputs.push_back(slurp(out));
    o.lines.push_back(fmt("  threads %d: exit %d, %zu bytes", threads, rc, outputs.back().size()));
  }
  std::filesystem::remove_all(dir);
  o.check(ran && !outputs[0].empty(), "simulate runs succeed");
  o.check(outputs[0] == outputs[1] && outputs[0] == outputs[2], "outputs byte-identical at 1, 4 and 8 threads");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"DGP1 panel DR estimators: bias, RMSE, coverage, asymptotic variance", criterion1},
      {"DGP2/DGP3 panel: DR unbiased, IPW and OR biases", criterion2},
      {"DGP1 TWFE bias, panel and repeated cross-section", criterion3},
      {"Efficiency bounds and panel/RC gap", criterion4},
      {"DGP1 repeated cross-section: dr1 vs dr2", criterion5},
      {"Improved estimators carry no estimation effect", criterion6},
      {"Formula oracles and intercept-only collapse", criterion7},
      {"IPT exact balance", criterion8},
      {"Simulation output independent of thread count", criterion9},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    all = all && out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first << "\n";
    for (const auto& l : out.lines) std::cout << l << "\n";
    std::cout.flush();
  }
  return all ? 0 : 1;
}
