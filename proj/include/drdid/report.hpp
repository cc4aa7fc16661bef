#pragma once

// JSON and CSV serialization of estimates, Monte Carlo summaries and bounds.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "drdid/efficiency.hpp"
#include "drdid/estimate.hpp"
#include "drdid/simulation.hpp"

namespace drdid {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

/// Non-finite values serialize as null.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_from(const Json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

inline Json to_json(const PsDiagnostics& p) {
  Json deciles = Json::array();
  for (double q : p.control_deciles) deciles.push_back(number(q));
  return Json{{"method", p.method},
              {"converged", p.converged},
              {"iterations", p.iterations},
              {"gradient_norm", number(p.gradient_norm)},
              {"control_min", number(p.control_min)},
              {"control_max", number(p.control_max)},
              {"control_deciles", deciles},
              {"trimmed", p.trimmed}};
}

inline Json to_json(const Diagnostics& d) {
  Json j;
  j["propensity"] = d.propensity ? to_json(*d.propensity) : Json(nullptr);
  Json fits = Json::array();
  for (const auto& f : d.outcome_fits) fits.push_back({{"subgroup", f.label}, {"method", f.method}, {"converged", f.converged}});
  j["outcome_fits"] = fits;
  j["se_method"] = d.se_method;
  j["bootstrap_draws"] = d.bootstrap_draws;
  j["bootstrap_nonfinite_rate"] = number(d.bootstrap_nonfinite_rate);
  j["moment_residual"] = d.moment_residual ? number(*d.moment_residual) : Json(nullptr);
  return j;
}

inline Json to_json(const AttEstimate& e) {
  return Json{{"method", e.method},
              {"att", number(e.att)},
              {"se", number(e.se)},
              {"ci", Json::array({number(e.ci.first), number(e.ci.second)})},
              {"level", e.level},
              {"diagnostics", to_json(e.diagnostics)}};
}

inline AttEstimate estimate_from_json(const Json& j) {
  AttEstimate e;
  e.method = j.at("method").get<std::string>();
  e.att = number_from(j.at("att"));
  e.se = number_from(j.at("se"));
  e.ci = {number_from(j.at("ci").at(0)), number_from(j.at("ci").at(1))};
  e.level = j.at("level").get<double>();
  const Json& d = j.at("diagnostics");
  e.diagnostics.se_method = d.at("se_method").get<std::string>();
  e.diagnostics.bootstrap_draws = d.at("bootstrap_draws").get<std::size_t>();
  e.diagnostics.bootstrap_nonfinite_rate = number_from(d.at("bootstrap_nonfinite_rate"));
  if (!d.at("moment_residual").is_null()) e.diagnostics.moment_residual = d.at("moment_residual").get<double>();
  for (const auto& f : d.at("outcome_fits")) {
    e.diagnostics.outcome_fits.push_back(
        {f.at("subgroup").get<std::string>(), f.at("method").get<std::string>(), f.at("converged").get<bool>()});
  }
  if (!d.at("propensity").is_null()) {
    const Json& p = d.at("propensity");
    PsDiagnostics ps;
    ps.method = p.at("method").get<std::string>();
    ps.converged = p.at("converged").get<bool>();
    ps.iterations = p.at("iterations").get<std::size_t>();
    ps.gradient_norm = number_from(p.at("gradient_norm"));
    ps.control_min = number_from(p.at("control_min"));
    ps.control_max = number_from(p.at("control_max"));
    for (const auto& q : p.at("control_deciles")) ps.control_deciles.push_back(number_from(q));
    ps.trimmed = p.at("trimmed").get<std::size_t>();
    e.diagnostics.propensity = ps;
  }
  return e;
}

inline Json to_json(const McSummary& s) {
  return Json{{"estimator", s.estimator},
              {"reps", s.reps},
              {"failures", s.failures},
              {"avg_bias", number(s.avg_bias)},
              {"med_bias", number(s.med_bias)},
              {"rmse", number(s.rmse)},
              {"mean_asy_var", number(s.mean_asy_var)},
              {"coverage", number(s.coverage)},
              {"ci_length", number(s.ci_length)},
              {"mc_se_of_bias", number(s.mc_se_of_bias)}};
}

inline McSummary summary_from_json(const Json& j) {
  McSummary s;
  s.estimator = j.at("estimator").get<std::string>();
  s.reps = j.at("reps").get<std::size_t>();
  s.failures = j.at("failures").get<std::size_t>();
  s.avg_bias = number_from(j.at("avg_bias"));
  s.med_bias = number_from(j.at("med_bias"));
  s.rmse = number_from(j.at("rmse"));
  s.mean_asy_var = number_from(j.at("mean_asy_var"));
  s.coverage = number_from(j.at("coverage"));
  s.ci_length = number_from(j.at("ci_length"));
  s.mc_se_of_bias = number_from(j.at("mc_se_of_bias"));
  return s;
}

inline Json to_json(const McValue& v) { return Json{{"value", number(v.value)}, {"mc_se", number(v.mc_se)}}; }

/// %.17g, enough digits to reproduce any double.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_estimates_csv(std::ostream& out, const std::vector<AttEstimate>& rows) {
  out << "method,att,se,ci_low,ci_high,level,se_method\n";
  for (const auto& e : rows) {
    out << e.method << ',' << format_number(e.att) << ',' << format_number(e.se) << ','
        << format_number(e.ci.first) << ',' << format_number(e.ci.second) << ',' << format_number(e.level) << ','
        << e.diagnostics.se_method << '\n';
  }
}

inline void write_summaries_csv(std::ostream& out, const std::vector<McSummary>& rows) {
  out << "estimator,reps,failures,avg_bias,med_bias,rmse,mean_asy_var,coverage,ci_length,mc_se_of_bias\n";
  for (const auto& s : rows) {
    out << s.estimator << ',' << s.reps << ',' << s.failures << ',' << format_number(s.avg_bias) << ','
        << format_number(s.med_bias) << ',' << format_number(s.rmse) << ',' << format_number(s.mean_asy_var)
        << ',' << format_number(s.coverage) << ',' << format_number(s.ci_length) << ','
        << format_number(s.mc_se_of_bias) << '\n';
  }
}

}  // namespace drdid
