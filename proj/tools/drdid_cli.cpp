// drdid: doubly robust difference-in-differences from the command line.
//
//   drdid estimate --input data.csv --design panel --estimators dr,dr_imp
//   drdid simulate --dgp 1 --design rc --n 1000 --reps 1000 --lambda 0.5
//   drdid bounds --dgp 2 --lambda 0.5 --draws 1000000

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "drdid/drdid.hpp"

namespace {

using drdid::Json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct RunConfig {
  std::string command;
  std::string input;
  std::string design = "panel";
  std::vector<std::string> estimators;
  std::string ps_method = "mle";
  std::optional<double> trim_threshold;
  std::size_t bootstrap_draws = 999;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::string output = "-";
  std::string format = "json";
  int dgp = 1;
  std::size_t n = 1000;
  std::size_t reps = 1000;
  double lambda = 0.5;
  std::size_t draws = 1000000;
  std::size_t threads = drdid::default_threads();
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(const drdid::Error& e) {
  return drdid::is_data_error(e.kind()) ? kExitData : kExitNumerical;
}

Json error_json(const drdid::Error& e) {
  return Json{{"kind", std::string(drdid::to_string(e.kind()))}, {"message", e.what()}};
}

std::vector<std::string> catalog_for(const std::string& design) {
  std::vector<std::string> out;
  if (design == "panel") {
    for (auto t : drdid::kPanelEstimators) out.emplace_back(t);
  } else {
    for (auto t : drdid::kRcEstimators) out.emplace_back(t);
  }
  return out;
}

void resolve_estimators(RunConfig& cfg) {
  const auto catalog = catalog_for(cfg.design);
  if (cfg.estimators.empty()) {
    cfg.estimators = catalog;
    return;
  }
  for (const auto& e : cfg.estimators) {
    if (std::find(catalog.begin(), catalog.end(), e) == catalog.end()) {
      std::string known;
      for (const auto& c : catalog) known += (known.empty() ? "" : ", ") + c;
      throw UsageError("unknown estimator '" + e + "' for design " + cfg.design + " (known: " + known + ")");
    }
  }
}

drdid::EstimatorOptions estimator_options(const RunConfig& cfg) {
  drdid::EstimatorOptions o;
  o.ps_method = cfg.ps_method == "ipt" ? drdid::PsMethod::IPT : drdid::PsMethod::MLE;
  o.trim_threshold = cfg.trim_threshold;
  o.level = cfg.level;
  o.bootstrap_draws = cfg.bootstrap_draws;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  return o;
}

Json provenance(const RunConfig& cfg) {
  Json config{{"command", cfg.command}};
  if (cfg.command == "estimate") {
    config["input"] = cfg.input;
    config["design"] = cfg.design;
    config["estimators"] = cfg.estimators;
    config["ps_method"] = cfg.ps_method;
    config["trim_threshold"] = cfg.trim_threshold ? Json(*cfg.trim_threshold) : Json(nullptr);
    config["bootstrap_draws"] = cfg.bootstrap_draws;
    config["level"] = cfg.level;
  } else if (cfg.command == "simulate") {
    config["dgp"] = cfg.dgp;
    config["design"] = cfg.design;
    config["n"] = cfg.n;
    config["reps"] = cfg.reps;
    config["lambda"] = cfg.lambda;
    config["estimators"] = cfg.estimators;
    config["ps_method"] = cfg.ps_method;
    config["trim_threshold"] = cfg.trim_threshold ? Json(*cfg.trim_threshold) : Json(nullptr);
    config["bootstrap_draws"] = cfg.bootstrap_draws;
    config["level"] = cfg.level;
    config["draws"] = cfg.draws;
  } else {
    config["dgp"] = cfg.dgp;
    config["lambda"] = cfg.lambda;
    config["draws"] = cfg.draws;
  }
  config["format"] = cfg.format;
  return Json{{"tool", "drdid"}, {"version", drdid::kVersion}, {"seed", cfg.seed}, {"config", config}};
}

void emit(const RunConfig& cfg, const std::string& text) {
  if (cfg.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw drdid::Error(drdid::ErrorKind::InvalidArgument, "cannot write '" + cfg.output + "'");
  out << text;
}

template <class Dataset, class Estimate>
int run_estimates(const RunConfig& cfg, const Dataset& data, const drdid::LoadSummary& summary, Estimate estimate) {
  const auto opts = estimator_options(cfg);
  std::vector<drdid::AttEstimate> ok;
  Json records = Json::array();
  std::optional<drdid::PsDiagnostics> fallback_ps;
  bool fallback_tried = false;
  int worst = kExitOk;
  for (const auto& tag : cfg.estimators) {
    try {
      drdid::AttEstimate est = estimate(tag, data, opts);
      if (!est.diagnostics.propensity) {
        if (!fallback_tried) {
          fallback_tried = true;
          try {
            const auto ps = drdid::fit_propensity(data.x, data.d, opts.ps_method, data.weights);
            fallback_ps = drdid::summarize_propensity(ps, data.d);
          } catch (const drdid::Error&) {
          }
        }
        est.diagnostics.propensity = fallback_ps;
      }
      records.push_back(drdid::to_json(est));
      ok.push_back(std::move(est));
    } catch (const drdid::Error& e) {
      records.push_back(Json{{"method", tag}, {"error", error_json(e)}});
      worst = std::max(worst, exit_code_for(e));
      std::cerr << "drdid: " << tag << ": " << e.what() << '\n';
    }
  }
  if (cfg.format == "csv") {
    std::ostringstream out;
    drdid::write_estimates_csv(out, ok);
    emit(cfg, out.str());
  } else {
    Json doc{{"command", "estimate"},
             {"provenance", provenance(cfg)},
             {"data",
              {{"design", cfg.design},
               {"rows", summary.rows},
               {"treated", summary.treated},
               {"controls", summary.controls},
               {"covariates", summary.covariates}}},
             {"records", records}};
    emit(cfg, doc.dump(2) + "\n");
  }
  return ok.empty() ? worst : kExitOk;
}

int run_estimate(RunConfig cfg) {
  resolve_estimators(cfg);
  drdid::LoadSummary summary;
  if (cfg.design == "panel") {
    const auto data = drdid::load_panel_csv(cfg.input, &summary);
    return run_estimates(cfg, data, summary, [](const std::string& t, const drdid::PanelDataset& d,
                                                const drdid::EstimatorOptions& o) {
      return drdid::estimate_panel(t, d, o);
    });
  }
  const auto data = drdid::load_rc_csv(cfg.input, &summary);
  return run_estimates(cfg, data, summary, [](const std::string& t, const drdid::RcDataset& d,
                                              const drdid::EstimatorOptions& o) {
    return drdid::estimate_rc(t, d, o);
  });
}

int run_simulate(RunConfig cfg) {
  resolve_estimators(cfg);
  drdid::DgpSpec spec;
  spec.dgp_id = cfg.dgp;
  spec.design = cfg.design == "panel" ? drdid::Design::Panel : drdid::Design::Rc;
  spec.n = cfg.n;
  spec.lambda = cfg.lambda;
  spec.seed = cfg.seed;
  if (spec.n < 100) throw UsageError("--n must be at least 100");

  drdid::McOptions mc;
  mc.reps = cfg.reps;
  mc.threads = cfg.threads;
  mc.estimator = estimator_options(cfg);
  const drdid::McRun run = drdid::run_mc(spec, cfg.estimators, mc);

  Json bound = nullptr;
  if (cfg.draws > 0) {
    const auto oracle = drdid::oracle_dgp(cfg.dgp, cfg.lambda);
    const auto v = spec.design == drdid::Design::Panel
                       ? drdid::eff_bound_panel(oracle, cfg.draws, cfg.seed, cfg.threads)
                       : drdid::eff_bound_rc(oracle, cfg.lambda, cfg.draws, cfg.seed, cfg.threads);
    bound = drdid::to_json(v);
    bound["draws"] = cfg.draws;
  }

  if (cfg.format == "csv") {
    std::ostringstream out;
    drdid::write_summaries_csv(out, run.rows);
    emit(cfg, out.str());
    return kExitOk;
  }
  Json rows = Json::array();
  for (const auto& r : run.rows) rows.push_back(drdid::to_json(r));
  Json doc{{"command", "simulate"},
           {"provenance", provenance(cfg)},
           {"design", cfg.design},
           {"dgp", cfg.dgp},
           {"n", cfg.n},
           {"reps", cfg.reps},
           {"lambda", spec.design == drdid::Design::Rc ? Json(cfg.lambda) : Json(nullptr)},
           {"efficiency_bound", bound},
           {"resamples", run.resamples},
           {"rows", rows}};
  emit(cfg, doc.dump(2) + "\n");
  return kExitOk;
}

int run_bounds(const RunConfig& cfg) {
  if (cfg.draws < 2) throw UsageError("--draws must be at least 2");
  const auto oracle = drdid::oracle_dgp(cfg.dgp, cfg.lambda);
  const auto panel = drdid::eff_bound_panel(oracle, cfg.draws, cfg.seed, cfg.threads);
  const auto rc = drdid::eff_bound_rc(oracle, cfg.lambda, cfg.draws, cfg.seed, cfg.threads);
  const auto gap = drdid::bound_gap_panel_rc(oracle, cfg.lambda, cfg.draws, cfg.seed, cfg.threads);
  const auto lam = drdid::optimal_lambda(oracle, cfg.draws, cfg.seed, cfg.threads);
  const auto dr_gap = drdid::dr1_dr2_gap_rc(oracle, cfg.lambda, cfg.draws, cfg.seed, cfg.threads);
  if (cfg.format == "csv") {
    std::ostringstream out;
    out << "quantity,value,mc_se\n";
    out << "panel_bound," << drdid::format_number(panel.value) << ',' << drdid::format_number(panel.mc_se) << '\n';
    out << "rc_bound," << drdid::format_number(rc.value) << ',' << drdid::format_number(rc.mc_se) << '\n';
    out << "panel_rc_gap," << drdid::format_number(gap.value) << ',' << drdid::format_number(gap.mc_se) << '\n';
    out << "optimal_lambda," << drdid::format_number(lam.lambda) << ",\n";
    out << "dr1_dr2_gap," << drdid::format_number(dr_gap.value) << ',' << drdid::format_number(dr_gap.mc_se)
        << '\n';
    emit(cfg, out.str());
    return kExitOk;
  }
  Json doc{{"command", "bounds"},
           {"provenance", provenance(cfg)},
           {"dgp", cfg.dgp},
           {"lambda", cfg.lambda},
           {"draws", cfg.draws},
           {"panel_bound", drdid::to_json(panel)},
           {"rc_bound", drdid::to_json(rc)},
           {"panel_rc_gap", drdid::to_json(gap)},
           {"optimal_lambda",
            {{"value", drdid::number(lam.lambda)},
             {"sigma0_sq", drdid::number(lam.sigma0_sq)},
             {"sigma1_sq", drdid::number(lam.sigma1_sq)}}},
           {"dr1_dr2_gap", drdid::to_json(dr_gap)}};
  emit(cfg, doc.dump(2) + "\n");
  return kExitOk;
}

void add_shared(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--seed", cfg.seed, "Random seed");
  sub->add_option("--output", cfg.output, "Output path, - for stdout");
  sub->add_option("--format", cfg.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--threads", cfg.threads, "Worker threads (default: DRDID_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
}

void add_estimator_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--design", cfg.design, "panel or rc")->check(CLI::IsMember({"panel", "rc"}));
  sub->add_option("--estimators", cfg.estimators, "Comma-separated estimator tags")->delimiter(',');
  sub->add_option("--ps-method", cfg.ps_method, "Propensity fit for generic estimators")
      ->check(CLI::IsMember({"mle", "ipt"}));
  sub->add_option("--trim-threshold", cfg.trim_threshold, "Drop controls with fitted propensity above this")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--bootstrap-draws", cfg.bootstrap_draws, "Multiplier bootstrap draws (0 skips)");
  sub->add_option("--level", cfg.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Doubly robust difference-in-differences estimators"};
  app.require_subcommand(1);

  auto* estimate = app.add_subcommand("estimate", "Estimate the ATT on a CSV dataset");
  estimate->add_option("--input", cfg.input, "CSV file")->required();
  add_estimator_flags(estimate, cfg);
  add_shared(estimate, cfg);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study on DGP1-DGP4");
  simulate->add_option("--dgp", cfg.dgp, "Design 1-4")->check(CLI::Range(1, 4));
  simulate->add_option("--n", cfg.n, "Sample size");
  simulate->add_option("--reps", cfg.reps, "Replications")->check(CLI::PositiveNumber);
  simulate->add_option("--lambda", cfg.lambda, "Post-period share (rc)")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--draws", cfg.draws, "Draws for the efficiency bound (0 skips)");
  add_estimator_flags(simulate, cfg);
  add_shared(simulate, cfg);

  auto* bounds = app.add_subcommand("bounds", "Efficiency bounds for DGP1-DGP4");
  bounds->add_option("--dgp", cfg.dgp, "Design 1-4")->check(CLI::Range(1, 4));
  bounds->add_option("--lambda", cfg.lambda, "Post-period share")->check(CLI::Range(0.0, 1.0));
  bounds->add_option("--draws", cfg.draws, "Monte Carlo draws");
  add_shared(bounds, cfg);

  bool simulate_draws_set = false;
  try {
    app.parse(argc, argv);
    simulate_draws_set = simulate->count("--bootstrap-draws") > 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*estimate) {
      cfg.command = "estimate";
      return run_estimate(cfg);
    }
    if (*simulate) {
      cfg.command = "simulate";
      if (!simulate_draws_set) cfg.bootstrap_draws = 0;
      return run_simulate(cfg);
    }
    cfg.command = "bounds";
    return run_bounds(cfg);
  } catch (const UsageError& e) {
    std::cerr << "drdid: " << e.what() << '\n';
    return kExitUsage;
  } catch (const drdid::Error& e) {
    std::cerr << "drdid: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
