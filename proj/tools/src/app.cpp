#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "prinstrat/learners.hpp"
#include "prinstrat/random.hpp"

#ifndef PRINSTRAT_VERSION
#define PRINSTRAT_VERSION "0.0.0"
#endif

namespace prinstrat::app {

namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Error config_error(const std::string& msg) { return Error(ErrorCode::ConfigError, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    return parse_number(trim(s));
  } catch (const Error&) {
    throw config_error(what + ": '" + s + "' is not a number");
  }
}

// Accepts the forms produced by LearnerSpec::name(): glm, gbt[transformed], stacked(glm+gbt), ...
LearnerSpec learner_from_name(std::string name) {
  name = trim(name);
  DesignKind design = DesignKind::Raw;
  const std::string suffix = "[transformed]";
  if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    design = DesignKind::Transformed;
    name.resize(name.size() - suffix.size());
  }
  if (name.rfind("stacked(", 0) == 0 && name.back() == ')') {
    std::vector<LearnerSpec> members;
    for (const auto& m : split(name.substr(8, name.size() - 9), '+')) members.push_back(learner_from_name(m));
    LearnerSpec s = LearnerSpec::stacked(members, design);
    s.validate();
    return s;
  }
  return LearnerSpec::parse(name, design);
}

json learners_json(const NuisanceSpecs& s) {
  return {{"propensity", s.propensity.name()},
          {"principal0", s.principal0.name()},
          {"principal1", s.principal1.name()},
          {"outcome", s.outcome.name()}};
}

NuisanceSpecs learners_from_json(const json& j, NuisanceSpecs base) {
  if (j.is_string()) {
    apply_learner(base, j.get<std::string>());
    return base;
  }
  if (!j.is_object()) throw config_error("learners must be a string or an object");
  for (const auto& [k, v] : j.items()) apply_learner(base, k + "=" + v.get<std::string>());
  return base;
}

std::vector<Stratum> parse_strata(const std::vector<std::string>& labels) {
  std::vector<Stratum> out;
  for (const auto& l : labels) {
    if (l == "all") {
      for (auto s : Stratum::all()) out.push_back(s);
      continue;
    }
    try {
      out.push_back(Stratum::parse(l));
    } catch (const Error&) {
      throw config_error("unknown stratum '" + l + "' (11, 01, 00, 10 or all)");
    }
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

double number_from_json(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_number(v.get<std::string>());
  throw Error(ErrorCode::SchemaError, "expected a number in report table");
}

// ---------------------------------------------------------------------------------------------
// estimate

std::vector<Column> estimate_columns() {
  using T = ColumnType;
  return {{"kind", T::Text},         {"run", T::Text},          {"point", T::Text},        {"log_theta", T::Number},
          {"stratum", T::Text},      {"estimator", T::Text},    {"estimate", T::Number},   {"se", T::Number},
          {"ci_lo", T::Number},      {"ci_hi", T::Number},      {"mu0", T::Number},        {"mu1", T::Number},
          {"plugin", T::Number},     {"e11_plugin", T::Number}, {"mean_tau", T::Number},   {"frac_p1_le_p0", T::Number},
          {"se_method", T::Text},    {"warnings", T::Text},     {"message", T::Text}};
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

json diagnostics_json(const std::string& run, const SweepPoint& pt, const EstimateReport& r) {
  json folds = json::array();
  for (const auto& f : r.fold_components) {
    folds.push_back({{"fold", f.fold},
                     {"n", f.n},
                     {"tau", number_json(f.tau)},
                     {"omega0", number_json(f.omega[0])},
                     {"omega1", number_json(f.omega[1])},
                     {"xi_sq", number_json(f.xi_sq)}});
  }
  return {{"run", run},
          {"point", pt.label},
          {"stratum", r.stratum.label()},
          {"estimator", to_string(r.estimator)},
          {"theta", r.theta_summary},
          {"min_weight", number_json(r.diag.min_weight)},
          {"max_weight", number_json(r.diag.max_weight)},
          {"clipped_fraction", number_json(r.diag.clipped_fraction)},
          {"folds", r.diag.folds},
          {"mean_e", number_json(r.diag.mean_e)},
          {"bootstrap_failures", r.diag.bootstrap_failures},
          {"fold_components", folds}};
}

void append_points(Table& t, json& diags, const std::string& run, const std::vector<SweepPoint>& points) {
  for (const auto& pt : points) {
    double e11 = kNaN;
    for (const auto& p : pt.proportions) {
      if (p.stratum == Stratum{1, 1}) e11 = p.plugin;
    }
    for (const auto& r : pt.reports) {
      t.add_row({std::string("estimate"), run, pt.label, pt.log_theta, r.stratum.label(), to_string(r.estimator),
                 r.mu_hat, r.se, r.ci_lo, r.ci_hi, r.mu_arm[0], r.mu_arm[1], kNaN, e11, r.diag.mean_tau,
                 r.diag.frac_p1_le_p0, r.diag.se_method, join(r.diag.warnings, ";"), std::string()});
      diags.push_back(diagnostics_json(run, pt, r));
    }
    for (const auto& p : pt.proportions) {
      t.add_row({std::string("proportion"), run, pt.label, pt.log_theta, p.stratum.label(), std::string(), p.estimate,
                 p.se, kNaN, kNaN, kNaN, kNaN, p.plugin, e11, kNaN, kNaN, std::string(), std::string(),
                 std::string()});
    }
    for (const auto& e : pt.errors) {
      t.add_row({std::string("error"), run, pt.label, pt.log_theta, std::string(), std::string(), kNaN, kNaN, kNaN,
                 kNaN, kNaN, kNaN, kNaN, e11, kNaN, kNaN, std::string(), std::string(), e});
    }
  }
}

SweepConfig sweep_config(const AnalysisConfig& cfg) {
  SweepConfig sc;
  sc.strata = cfg.strata;
  sc.estimators = cfg.estimators;
  sc.specs = cfg.learners;
  sc.ml_specs = cfg.ml_learners;
  sc.K = cfg.folds;
  sc.seed = cfg.seed;
  sc.include_monotone = cfg.references;
  sc.include_independence = cfg.references;
  sc.est.alpha = cfg.alpha;
  sc.est.seed = cfg.seed;
  if (cfg.bootstrap == 0) {
    sc.est.variance = VarianceMethod::PlugIn;
  } else {
    sc.est.bootstrap_B = cfg.bootstrap;
  }
  sc.est.nuisance.clip = cfg.clip;
  sc.est.nuisance.outcome_defined_when_d0 = cfg.outcome_defined_when_d0;
  return sc;
}

void add_references(const AnalysisConfig& cfg, std::vector<SensitivitySpec>& specs, std::vector<std::string>& labels) {
  if (!cfg.references) return;
  specs.push_back(SensitivitySpec::monotone(true));
  labels.emplace_back("monotone");
  specs.push_back(SensitivitySpec::independence());
  labels.emplace_back("independence");
}

LoadedData load_input(const AnalysisConfig& cfg) {
  ColumnMapping m = cfg.columns;
  m.strata = cfg.strata;
  m.outcome_defined_when_d0 = cfg.outcome_defined_when_d0;
  if (cfg.theta_mode.rfind("column:", 0) == 0) m.theta = cfg.theta_mode.substr(7);
  return load_csv(cfg.input, m);
}

// ---------------------------------------------------------------------------------------------
// simulate

ThetaTrueMode parse_true_mode(const std::string& s) {
  if (s == "constant") return ThetaTrueMode::Constant;
  if (s == "infinity" || s == "inf") return ThetaTrueMode::Infinity;
  if (s == "covariate" || s == "cov") return ThetaTrueMode::Covariate;
  throw config_error("unknown dgp mode '" + s + "' (constant, infinity, covariate)");
}

std::string true_mode_name(ThetaTrueMode m) {
  switch (m) {
    case ThetaTrueMode::Constant: return "constant";
    case ThetaTrueMode::Infinity: return "infinity";
    case ThetaTrueMode::Covariate: return "covariate";
  }
  return "?";
}

FittedTheta parse_fitted(const json& j) {
  if (j.is_number()) return FittedTheta::constant(j.get<double>());
  const std::string s = j.get<std::string>();
  if (s == "monotone" || s == "inf" || s == "infinity") return FittedTheta::monotone();
  if (s == "independence") return FittedTheta::independence();
  if (s == "true_theta_x" || s == "true") return FittedTheta::true_per_unit();
  if (s == "mean_theta" || s == "mean") return FittedTheta::superpop_mean();
  return FittedTheta::constant(to_double(s, "fitted theta"));
}

json fitted_json(const FittedTheta& f) {
  if (f.kind == FittedThetaKind::Constant) return f.value;
  return f.label();
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DgpConfig dgp_from_json(const json& j) {
  DgpConfig d;
  if (j.contains("mode")) d.mode = parse_true_mode(j.at("mode").get<std::string>());
  read_opt(j, "n", d.n);
  read_opt(j, "theta", d.theta);
  read_opt(j, "cov_offset", d.cov_offset);
  read_opt(j, "pi_intercept", d.pi_intercept);
  read_opt(j, "pi_slope", d.pi_slope);
  read_opt(j, "p_intercept", d.p_intercept);
  read_opt(j, "p_slope", d.p_slope);
  read_opt(j, "inf_intercept", d.inf_intercept);
  read_opt(j, "inf_slope", d.inf_slope);
  read_opt(j, "y_base", d.y_base);
  read_opt(j, "y_z", d.y_z);
  read_opt(j, "y_x", d.y_x);
  read_opt(j, "y_zx", d.y_zx);
  read_opt(j, "y_d", d.y_d);
  read_opt(j, "noise_sd", d.noise_sd);
  return d;
}

json dgp_json(const DgpConfig& d) {
  return {{"mode", true_mode_name(d.mode)}, {"n", d.n},
          {"theta", d.theta},               {"cov_offset", d.cov_offset},
          {"pi_intercept", d.pi_intercept}, {"pi_slope", d.pi_slope},
          {"p_intercept", d.p_intercept},   {"p_slope", d.p_slope},
          {"inf_intercept", d.inf_intercept}, {"inf_slope", d.inf_slope},
          {"y_base", d.y_base},             {"y_z", d.y_z},
          {"y_x", d.y_x},                   {"y_zx", d.y_zx},
          {"y_d", d.y_d},                   {"noise_sd", d.noise_sd}};
}

std::vector<EstimatorKind> estimators_from_json(const json& j) {
  std::vector<EstimatorKind> out;
  if (j.is_string()) {
    out.push_back(parse_estimator(j.get<std::string>()));
  } else {
    for (const auto& e : j) out.push_back(parse_estimator(e.get<std::string>()));
  }
  return out;
}

json estimators_json(const std::vector<EstimatorKind>& v) {
  json a = json::array();
  for (auto k : v) a.push_back(to_string(k));
  return a;
}

std::vector<Stratum> strata_from_json(const json& j) {
  if (j.is_string()) return parse_strata(split(j.get<std::string>(), ','));
  return parse_strata(j.get<std::vector<std::string>>());
}

json strata_json(const std::vector<Stratum>& v) {
  json a = json::array();
  for (auto s : v) a.push_back(s.label());
  return a;
}

}  // namespace

// -----------------------------------------------------------------------------------------------

std::vector<double> parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw config_error("theta grid must be lo:hi:n, got '" + text + "'");
  const double lo = to_double(parts[0], "theta grid");
  const double hi = to_double(parts[1], "theta grid");
  const double nd = to_double(parts[2], "theta grid");
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw config_error("theta grid bounds must be finite");
  if (nd < 1 || nd != std::floor(nd)) throw config_error("theta grid count must be a positive integer");
  const auto n = static_cast<int>(nd);
  if (n == 1) {
    if (lo != hi) throw config_error("a one-point theta grid needs lo == hi");
    return {lo};
  }
  if (!(hi > lo)) throw config_error("theta grid needs hi > lo");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  g.back() = hi;
  return g;
}

void apply_learner(NuisanceSpecs& specs, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    specs = NuisanceSpecs::uniform(learner_from_name(assignment));
    return;
  }
  const std::string target = trim(assignment.substr(0, eq));
  const LearnerSpec l = learner_from_name(assignment.substr(eq + 1));
  if (target == "propensity" || target == "pi") {
    specs.propensity = l;
  } else if (target == "principal") {
    specs.principal0 = l;
    specs.principal1 = l;
  } else if (target == "principal0" || target == "p0") {
    specs.principal0 = l;
  } else if (target == "principal1" || target == "p1") {
    specs.principal1 = l;
  } else if (target == "outcome" || target == "m") {
    specs.outcome = l;
  } else {
    throw config_error("unknown nuisance '" + target + "' (propensity, principal, principal0, principal1, outcome)");
  }
}

void AnalysisConfig::validate() const {
  if (input.empty()) throw config_error("no input file (--input)");
  if (strata.empty()) throw config_error("no strata selected");
  if (estimators.empty()) throw config_error("no estimators selected");
  if (folds < 2) throw config_error("--folds must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("--alpha must lie in (0, 1)");
  if (bootstrap < 0) throw config_error("--bootstrap must be >= 0");
  if (!(clip >= 0.0 && clip < 0.5)) throw config_error("clip must lie in [0, 0.5)");
  if (histogram_bins < 1) throw config_error("histogram bins must be >= 1");
  const bool column = theta_mode.rfind("column:", 0) == 0;
  if (column && theta_mode.size() == 7) throw config_error("theta mode column: needs a column name");
  if (!column && theta_mode != "constant" && theta_mode != "independence" && theta_mode != "monotone") {
    throw config_error("unknown theta mode '" + theta_mode + "' (constant, independence, monotone, column:NAME)");
  }
  if (theta_mode == "constant") {
    if (!theta_grid.empty()) {
      parse_grid(theta_grid);
    } else {
      if (theta.empty()) throw config_error("no theta values");
      for (double t : theta) SensitivitySpec::constant(t);
    }
  }
  learners.propensity.validate();
  learners.principal0.validate();
  learners.principal1.validate();
  learners.outcome.validate();
  ml_learners.propensity.validate();
  ml_learners.principal0.validate();
  ml_learners.principal1.validate();
  ml_learners.outcome.validate();
}

void SimulateConfig::validate() const {
  if (scenarios.empty()) throw config_error("simulate config has no scenarios");
  if (threads < 1) throw config_error("threads must be >= 1");
  for (const auto& s : scenarios) s.validate();
}

json to_json(const AnalysisConfig& c) {
  json cols = {{"y", c.columns.y}, {"d", c.columns.d}, {"z", c.columns.z}, {"x", c.columns.x}};
  json theta = json::array();
  for (double t : c.theta) theta.push_back(number_json(t));
  return {{"input", c.input},
          {"columns", cols},
          {"strata", strata_json(c.strata)},
          {"theta_mode", c.theta_mode},
          {"theta", theta},
          {"theta_grid", c.theta_grid},
          {"references", c.references},
          {"estimators", estimators_json(c.estimators)},
          {"learners", learners_json(c.learners)},
          {"ml_learners", learners_json(c.ml_learners)},
          {"folds", c.folds},
          {"seed", c.seed},
          {"bootstrap", c.bootstrap},
          {"alpha", c.alpha},
          {"clip", c.clip},
          {"outcome_defined_when_d0", c.outcome_defined_when_d0},
          {"histogram_bins", c.histogram_bins},
          {"monotonicity_threshold", c.monotonicity_threshold}};
}

AnalysisConfig analysis_from_json(const json& j) {
  AnalysisConfig c;
  try {
    read_opt(j, "input", c.input);
    if (j.contains("columns")) {
      const json& m = j.at("columns");
      read_opt(m, "y", c.columns.y);
      read_opt(m, "d", c.columns.d);
      read_opt(m, "z", c.columns.z);
      read_opt(m, "x", c.columns.x);
    }
    if (j.contains("strata")) c.strata = strata_from_json(j.at("strata"));
    read_opt(j, "theta_mode", c.theta_mode);
    if (j.contains("theta")) {
      const json& t = j.at("theta");
      c.theta.clear();
      if (t.is_array()) {
        for (const auto& v : t) c.theta.push_back(number_from_json(v));
      } else {
        c.theta.push_back(number_from_json(t));
      }
    }
    read_opt(j, "theta_grid", c.theta_grid);
    read_opt(j, "references", c.references);
    if (j.contains("estimators")) c.estimators = estimators_from_json(j.at("estimators"));
    if (j.contains("learners")) c.learners = learners_from_json(j.at("learners"), c.learners);
    if (j.contains("ml_learners")) c.ml_learners = learners_from_json(j.at("ml_learners"), c.ml_learners);
    read_opt(j, "folds", c.folds);
    read_opt(j, "seed", c.seed);
    read_opt(j, "bootstrap", c.bootstrap);
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "clip", c.clip);
    read_opt(j, "outcome_defined_when_d0", c.outcome_defined_when_d0);
    read_opt(j, "histogram_bins", c.histogram_bins);
    read_opt(j, "monotonicity_threshold", c.monotonicity_threshold);
    read_opt(j, "output", c.output);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return c;
}

json to_json(const SimulateConfig& c) {
  json sc = json::array();
  for (const auto& s : c.scenarios) {
    sc.push_back({{"dgp", dgp_json(s.dgp)},
                  {"fitted", fitted_json(s.fitted)},
                  {"design_spec", std::string(1, s.design_spec)},
                  {"estimators", estimators_json(s.estimators)},
                  {"reps", s.reps},
                  {"strata", strata_json(s.strata)},
                  {"K", s.K},
                  {"ml_learner", s.ml_learner.name()},
                  {"seed", s.master_seed},
                  {"alpha", s.alpha},
                  {"bootstrap", s.bootstrap_B},
                  {"superpop_units", s.superpop_units},
                  {"unstable_tau", s.unstable_tau}});
  }
  return {{"seed", c.seed}, {"threads", c.threads}, {"scenarios", sc}};
}

SimulateConfig simulate_from_json(const json& j) {
  SimulateConfig c;
  try {
    read_opt(j, "seed", c.seed);
    read_opt(j, "threads", c.threads);
    read_opt(j, "output", c.output);
    if (!j.contains("scenarios") || !j.at("scenarios").is_array()) throw config_error("simulate config needs a scenarios array");
    std::size_t idx = 0;
    for (const auto& s : j.at("scenarios")) {
      SimScenario sc;
      if (s.contains("dgp")) sc.dgp = dgp_from_json(s.at("dgp"));
      if (s.contains("fitted")) sc.fitted = parse_fitted(s.at("fitted"));
      else sc.fitted = FittedTheta::constant(sc.dgp.theta);
      if (s.contains("design_spec")) {
        const auto d = s.at("design_spec").get<std::string>();
        if (d.size() != 1) throw config_error("design_spec must be one letter a-e");
        sc.design_spec = d[0];
      }
      if (s.contains("estimators")) sc.estimators = estimators_from_json(s.at("estimators"));
      read_opt(s, "reps", sc.reps);
      if (s.contains("strata")) sc.strata = strata_from_json(s.at("strata"));
      read_opt(s, "K", sc.K);
      if (s.contains("ml_learner")) sc.ml_learner = learner_from_name(s.at("ml_learner").get<std::string>());
      sc.master_seed = derive_seed(c.seed, {idx});
      read_opt(s, "seed", sc.master_seed);
      read_opt(s, "alpha", sc.alpha);
      read_opt(s, "bootstrap", sc.bootstrap_B);
      read_opt(s, "superpop_units", sc.superpop_units);
      read_opt(s, "unstable_tau", sc.unstable_tau);
      read_opt(s, "cache_dir", sc.cache_dir);
      c.scenarios.push_back(sc);
      ++idx;
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return c;
}

const Table& Report::table(const std::string& name) const {
  for (const auto& [n, t] : tables) {
    if (n == name) return t;
  }
  throw config_error("report has no table '" + name + "'");
}

json Report::body() const {
  json tabs = json::array();
  for (const auto& [n, t] : tables) {
    json tj = table_to_json(t);
    tj["name"] = n;
    tabs.push_back(tj);
  }
  return {{"command", command}, {"config", config}, {"tables", tabs}, {"details", details}, {"log", log}};
}

std::string Report::config_hash() const { return hex64(fnv1a64(config.dump())); }

json Report::document(const std::string& timestamp) const {
  return {{"schema_version", 1},
          {"metadata",
           {{"version", PRINSTRAT_VERSION}, {"seed", seed}, {"config_hash", config_hash()}, {"timestamp", timestamp}}},
          {"body", body()}};
}

json table_to_json(const Table& t) {
  json cols = json::array();
  for (const auto& c : t.columns) {
    cols.push_back({{"name", c.name}, {"type", c.type == ColumnType::Number ? "number" : "text"}});
  }
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row = json::array();
    for (const auto& cell : r) {
      if (const auto* d = std::get_if<double>(&cell)) {
        row.push_back(number_json(*d));
      } else {
        row.push_back(std::get<std::string>(cell));
      }
    }
    rows.push_back(row);
  }
  return {{"columns", cols}, {"rows", rows}};
}

Table table_from_json(const json& j) {
  Table t;
  try {
    for (const auto& c : j.at("columns")) {
      t.columns.push_back({c.at("name").get<std::string>(),
                           c.at("type").get<std::string>() == "number" ? ColumnType::Number : ColumnType::Text});
    }
    for (const auto& r : j.at("rows")) {
      if (r.size() != t.columns.size()) throw Error(ErrorCode::SchemaError, "report row width mismatch");
      std::vector<Cell> row;
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (t.columns[i].type == ColumnType::Number) {
          row.emplace_back(number_from_json(r[i]));
        } else {
          row.emplace_back(r[i].get<std::string>());
        }
      }
      t.add_row(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("report table: ") + e.what());
  }
  return t;
}

Report report_from_json(const json& doc) {
  if (doc.value("schema_version", 0) != 1) throw Error(ErrorCode::SchemaError, "unsupported report schema_version");
  const json& b = doc.at("body");
  Report r;
  r.command = b.at("command").get<std::string>();
  r.config = b.at("config");
  r.seed = doc.at("metadata").at("seed").get<std::uint64_t>();
  for (const auto& tj : b.at("tables")) r.tables.emplace_back(tj.at("name").get<std::string>(), table_from_json(tj));
  r.details = b.at("details");
  r.log = b.at("log").get<std::vector<std::string>>();
  return r;
}

std::vector<std::string> write_report(const Report& r, const std::string& path) {
  const std::filesystem::path p(path);
  const std::string ext = p.extension().string();
  std::vector<std::string> written;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto csv = [&](const std::string& f) {
    write_file(f, r.tables.front().second.to_csv());
    written.push_back(f);
  };
  auto js = [&](const std::string& f) {
    write_file(f, r.document(utc_timestamp()).dump(2) + "\n");
    written.push_back(f);
  };
  if (ext == ".csv") {
    csv(path);
  } else if (ext == ".json") {
    js(path);
  } else if (ext.empty()) {
    csv(path + ".csv");
    js(path + ".json");
  } else {
    throw config_error("output extension must be .csv, .json or none, got '" + ext + "'");
  }
  return written;
}

Report cmd_estimate(const AnalysisConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.command = "estimate";
  rep.config = to_json(cfg);
  rep.seed = cfg.seed;
  const LoadedData data = load_input(cfg);
  rep.log = data.log;
  for (const auto& e : data.exclusions) rep.log.push_back("excluded: " + e);

  const SweepConfig sc = sweep_config(cfg);
  Table t;
  t.columns = estimate_columns();
  json diags = json::array();

  if (cfg.theta_mode == "constant" && !cfg.theta_grid.empty()) {
    const SweepResult res = sweep_theta(data.ds, parse_grid(cfg.theta_grid), sc);
    append_points(t, diags, "primary", res.points);
  } else {
    std::vector<SensitivitySpec> specs;
    std::vector<std::string> labels;
    std::vector<double> logs;
    if (cfg.theta_mode == "constant") {
      for (double v : cfg.theta) {
        specs.push_back(SensitivitySpec::constant(v));
        labels.push_back(specs.back().summary());
        logs.push_back(std::log(v));
      }
    } else if (cfg.theta_mode == "independence") {
      specs.push_back(SensitivitySpec::independence());
      labels.emplace_back("independence");
      logs.push_back(0.0);
    } else if (cfg.theta_mode == "monotone") {
      specs.push_back(SensitivitySpec::monotone(true));
      labels.emplace_back("monotone");
      logs.push_back(std::numeric_limits<double>::infinity());
    } else {
      specs.push_back(SensitivitySpec::per_unit(data.theta));
      labels.push_back(specs.back().summary());
      logs.push_back(kNaN);
    }
    add_references(cfg, specs, labels);
    SweepConfig plain = sc;
    plain.include_monotone = false;
    plain.include_independence = false;
    auto points = evaluate_specs(data.ds, specs, labels, plain);
    for (std::size_t i = 0; i < logs.size(); ++i) points[i].log_theta = logs[i];
    append_points(t, diags, "primary", points);

    if (specs.front().mode() == SensitivitySpec::Mode::PerUnit) {
      const auto& v = data.theta;
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      const SensitivitySpec approx = SensitivitySpec::constant(mean);
      auto comp = evaluate_specs(data.ds, {approx}, {approx.summary()}, plain);
      comp[0].log_theta = std::log(mean);
      append_points(t, diags, "constant_mean", comp);
      rep.log.push_back("constant companion run at mean theta " + format_number(mean));
    }
  }
  rep.tables.emplace_back("estimates", std::move(t));
  rep.details["diagnostics"] = std::move(diags);
  return rep;
}

Report cmd_simulate(const SimulateConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.command = "simulate";
  rep.config = to_json(cfg);
  rep.seed = cfg.seed;
  std::vector<SimMetrics> all;
  Table failures;
  failures.columns = {{"scenario", ColumnType::Number},
                      {"stratum", ColumnType::Text},
                      {"estimator", ColumnType::Text},
                      {"message", ColumnType::Text}};
  for (std::size_t i = 0; i < cfg.scenarios.size(); ++i) {
    SimScenario sc = cfg.scenarios[i];
    sc.threads = cfg.threads;
    SimMetrics m = run_scenario(sc);
    for (const auto& row : m.rows) {
      for (const auto& f : row.failure_log) {
        failures.add_row({static_cast<double>(i), row.stratum.label(), to_string(row.estimator), f});
      }
    }
    std::ostringstream os;
    os << "scenario " << i << ": theta_true=" << m.theta_true << " fitted=" << m.fitted << " spec=" << m.design_spec
       << " n=" << m.n << " reps=" << sc.reps;
    rep.log.push_back(os.str());
    all.push_back(std::move(m));
  }
  rep.tables.emplace_back("metrics", summarize(all));
  rep.tables.emplace_back("failures", std::move(failures));
  return rep;
}

Report cmd_validate(const AnalysisConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.command = "validate";
  rep.config = to_json(cfg);
  rep.seed = cfg.seed;
  const LoadedData data = load_input(cfg);
  rep.log = data.log;
  const Dataset& ds = data.ds;

  std::array<Eigen::VectorXd, 2> p;
  for (int z = 0; z < 2; ++z) {
    const LearnerSpec& spec = z == 0 ? cfg.learners.principal0 : cfg.learners.principal1;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      if (ds.z[i] == z) rows.push_back(i);
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyCell, "no rows with Z=" + std::to_string(z));
    Eigen::VectorXd resp(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) resp[static_cast<Eigen::Index>(k)] = ds.d[rows[k]];
    const Eigen::MatrixXd& design = ds.design(spec.design);
    const auto fitted = fit_learner(spec, take_rows(design, rows), resp, Target::Probability,
                                    derive_seed(cfg.seed, {static_cast<std::uint64_t>(z)}));
    for (const auto& note : fitted.notes) rep.log.push_back("principal" + std::to_string(z) + ": " + note);
    p[static_cast<std::size_t>(z)] = fitted.model->predict(design);
  }
  const Eigen::VectorXd diff = p[1] - p[0];
  const auto n = static_cast<double>(diff.size());
  const double frac_neg = static_cast<double>((diff.array() < 0.0).count()) / n;
  const double lo = diff.minCoeff();
  const double hi = diff.maxCoeff();
  const int bins = cfg.histogram_bins;
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const int b = std::min(bins - 1, static_cast<int>((diff[i] - lo) / width));
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  Table hist;
  hist.columns = {{"bin_lo", ColumnType::Number}, {"bin_hi", ColumnType::Number}, {"count", ColumnType::Number}};
  for (int b = 0; b < bins; ++b) {
    hist.add_row({lo + b * width, b + 1 == bins ? std::max(hi, lo + width * bins) : lo + (b + 1) * width,
                  counts[static_cast<std::size_t>(b)]});
  }
  const bool flag = frac_neg > cfg.monotonicity_threshold;
  Table summary;
  summary.columns = {{"n", ColumnType::Number},          {"frac_negative", ColumnType::Number},
                     {"mean_diff", ColumnType::Number},  {"min_diff", ColumnType::Number},
                     {"max_diff", ColumnType::Number},   {"threshold", ColumnType::Number},
                     {"monotonicity_implausible", ColumnType::Text}};
  summary.add_row({n, frac_neg, diff.mean(), lo, hi, cfg.monotonicity_threshold, std::string(flag ? "true" : "false")});
  if (flag) {
    rep.log.push_back("monotonicity implausible: " + format_number(frac_neg) + " of units have p1_hat < p0_hat");
  }
  rep.tables.emplace_back("summary", std::move(summary));
  rep.tables.emplace_back("histogram", std::move(hist));
  return rep;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidTheta:
    case ErrorCode::ThetaOne:
      return 2;
    case ErrorCode::ParseError:
    case ErrorCode::SchemaError:
    case ErrorCode::DomainError:
    case ErrorCode::UndefinedOutcome:
    case ErrorCode::EmptyCell:
    case ErrorCode::SparseCell:
      return 3;
    case ErrorCode::DegenerateMargin:
    case ErrorCode::DeltaUnderflow:
    case ErrorCode::SeparationDetected:
    case ErrorCode::RankDeficient:
    case ErrorCode::NearZeroDenominator:
    case ErrorCode::StackedFitFailed:
      return 4;
  }
  return 4;
}

namespace {

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error("config '" + path + "': " + e.what());
  }
}

struct AnalysisFlags {
  std::string config;
  std::string input;
  std::string output;
  std::vector<std::string> strata;
  std::vector<double> theta;
  std::string theta_grid;
  std::string theta_mode;
  std::vector<std::string> estimators;
  int folds = 0;
  std::vector<std::string> learners;
  std::vector<std::string> ml_learners;
  int bootstrap = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string y, d, z;
  std::vector<std::string> x;
  int bins = 0;
  double threshold = 0.0;
  double clip = 0.0;
  CLI::Option* o_folds = nullptr;
  CLI::Option* o_bootstrap = nullptr;
  CLI::Option* o_alpha = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_bins = nullptr;
  CLI::Option* o_threshold = nullptr;
  CLI::Option* o_clip = nullptr;
  CLI::Option* o_d0 = nullptr;
  CLI::Option* o_refs = nullptr;
};

void add_analysis_flags(CLI::App* sub, AnalysisFlags& f, bool validate_only) {
  sub->add_option("--config", f.config, "JSON config file; flags override it");
  sub->add_option("--input", f.input, "CSV data file");
  sub->add_option("--output", f.output, "Output path (.csv, .json, or no extension for both)");
  sub->add_option("--y", f.y, "Outcome column");
  sub->add_option("--d", f.d, "Intermediate variable column");
  sub->add_option("--z", f.z, "Treatment column");
  sub->add_option("--x", f.x, "Covariate columns (default: all others)")->delimiter(',');
  sub->add_option("--learner", f.learners, "Learner NAME or NUISANCE=NAME (glm, logistic, ols, gbt, stacked)");
  f.o_seed = sub->add_option("--seed", f.seed, "Random seed");
  f.o_clip = sub->add_option("--clip", f.clip, "Clip fitted probabilities to [c, 1-c]");
  if (validate_only) {
    f.o_bins = sub->add_option("--bins", f.bins, "Histogram bins");
    f.o_threshold = sub->add_option("--threshold", f.threshold, "Negative-fraction threshold for the flag");
    return;
  }
  sub->add_option("--stratum", f.strata, "Strata: 11, 01, 00, 10 or all")->delimiter(',');
  sub->add_option("--theta", f.theta, "Constant theta values")->delimiter(',');
  sub->add_option("--theta-grid", f.theta_grid, "log-theta grid lo:hi:n");
  sub->add_option("--theta-mode", f.theta_mode, "constant | independence | monotone | column:NAME");
  sub->add_option("--estimator", f.estimators, "wt, or, cdr, dml")->delimiter(',');
  f.o_folds = sub->add_option("--folds", f.folds, "Cross-fitting folds K");
  sub->add_option("--ml-learner", f.ml_learners, "DML learner NAME or NUISANCE=NAME");
  f.o_bootstrap = sub->add_option("--bootstrap", f.bootstrap, "Bootstrap replicates for WT/OR (0: plug-in)");
  f.o_alpha = sub->add_option("--alpha", f.alpha, "Wald interval level");
  f.o_d0 = sub->add_flag("--outcome-defined-when-d0", "Outcomes are defined when D = 0");
  f.o_refs = sub->add_flag("--references", "Add monotone and independence reference rows");
}

AnalysisConfig resolve(const AnalysisFlags& f) {
  AnalysisConfig c = analysis_from_json(read_config_file(f.config));
  if (!f.input.empty()) c.input = f.input;
  if (!f.output.empty()) c.output = f.output;
  if (!f.y.empty()) c.columns.y = f.y;
  if (!f.d.empty()) c.columns.d = f.d;
  if (!f.z.empty()) c.columns.z = f.z;
  if (!f.x.empty()) c.columns.x = f.x;
  if (!f.strata.empty()) c.strata = parse_strata(f.strata);
  if (!f.theta.empty()) c.theta = f.theta;
  if (!f.theta_grid.empty()) c.theta_grid = f.theta_grid;
  if (!f.theta_mode.empty()) c.theta_mode = f.theta_mode;
  if (!f.estimators.empty()) {
    c.estimators.clear();
    for (const auto& e : f.estimators) c.estimators.push_back(parse_estimator(e));
  }
  for (const auto& l : f.learners) apply_learner(c.learners, l);
  for (const auto& l : f.ml_learners) apply_learner(c.ml_learners, l);
  if (f.o_folds && f.o_folds->count()) c.folds = f.folds;
  if (f.o_bootstrap && f.o_bootstrap->count()) c.bootstrap = f.bootstrap;
  if (f.o_alpha && f.o_alpha->count()) c.alpha = f.alpha;
  if (f.o_seed && f.o_seed->count()) c.seed = f.seed;
  if (f.o_clip && f.o_clip->count()) c.clip = f.clip;
  if (f.o_bins && f.o_bins->count()) c.histogram_bins = f.bins;
  if (f.o_threshold && f.o_threshold->count()) c.monotonicity_threshold = f.threshold;
  if (f.o_d0 && f.o_d0->count()) c.outcome_defined_when_d0 = true;
  if (f.o_refs && f.o_refs->count()) c.references = true;
  return c;
}

void emit(const Report& r, const std::string& output) {
  if (output.empty()) {
    std::cout << r.tables.front().second.to_csv();
    return;
  }
  for (const auto& f : write_report(r, output)) std::cerr << "wrote " << f << "\n";
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Principal stratum effects under an odds-ratio sensitivity parameter"};
  app.set_version_flag("--version", PRINSTRAT_VERSION);
  app.require_subcommand(1);

  AnalysisFlags est_flags;
  AnalysisFlags val_flags;
  CLI::App* est = app.add_subcommand("estimate", "Estimate principal causal effects over theta");
  add_analysis_flags(est, est_flags, false);
  CLI::App* val = app.add_subcommand("validate", "Check the plausibility of monotonicity");
  add_analysis_flags(val, val_flags, true);

  std::string sim_config;
  std::string sim_output;
  int sim_reps = 0;
  int sim_threads = 0;
  std::uint64_t sim_seed = 0;
  CLI::App* sim = app.add_subcommand("simulate", "Run simulation scenarios");
  sim->add_option("--config", sim_config, "JSON scenario file")->required();
  sim->add_option("--output", sim_output, "Output path (.csv, .json, or no extension for both)");
  auto* o_reps = sim->add_option("--reps", sim_reps, "Override replicates for every scenario");
  auto* o_threads = sim->add_option("--threads", sim_threads, "Worker threads");
  auto* o_sim_seed = sim->add_option("--seed", sim_seed, "Master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*est) {
      const AnalysisConfig c = resolve(est_flags);
      emit(cmd_estimate(c), c.output);
    } else if (*val) {
      const AnalysisConfig c = resolve(val_flags);
      const Report r = cmd_validate(c);
      emit(r, c.output);
    } else if (*sim) {
      json j = read_config_file(sim_config);
      if (o_sim_seed->count()) j["seed"] = sim_seed;
      SimulateConfig c = simulate_from_json(j);
      if (o_reps->count()) {
        for (auto& s : c.scenarios) s.reps = sim_reps;
      }
      if (o_threads->count()) c.threads = sim_threads;
      if (!sim_output.empty()) c.output = sim_output;
      emit(cmd_simulate(c), c.output);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("prinstrat");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace prinstrat::app
