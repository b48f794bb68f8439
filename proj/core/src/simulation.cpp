#include "prinstrat/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "prinstrat/error.hpp"
#include "prinstrat/random.hpp"

namespace prinstrat {

namespace {

double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Eigen::VectorXd row_sums(const Eigen::MatrixXd& x) {
  if (x.cols() != DgpConfig::p) {
    throw Error(ErrorCode::SchemaError, "expected " + std::to_string(DgpConfig::p) + " covariates");
  }
  return x.rowwise().sum();
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path cache_root(const std::string& cache_dir) {
  if (!cache_dir.empty()) return cache_dir;
  if (const char* env = std::getenv("PRINSTRAT_CACHE_DIR"); env && *env) return env;
  return std::filesystem::temp_directory_path() / "prinstrat-cache";
}

bool read_cache(const std::filesystem::path& file, SuperpopTruth& t) {
  std::ifstream in(file);
  if (!in) return false;
  std::map<std::string, double> kv;
  std::string key;
  std::string value;
  while (in >> key >> value) kv[key] = std::strtod(value.c_str(), nullptr);
  const auto strata = Stratum::all();
  try {
    for (std::size_t k = 0; k < 4; ++k) {
      const auto l = strata[k].label();
      t.mu[k] = kv.at("mu" + l);
      t.mu_arm[k][0] = kv.at("mu0_" + l);
      t.mu_arm[k][1] = kv.at("mu1_" + l);
      t.proportion[k] = kv.at("e" + l);
    }
    t.mean_theta = kv.at("mean_theta");
    t.units = static_cast<std::size_t>(kv.at("units"));
  } catch (const std::out_of_range&) {
    return false;
  }
  return true;
}

void write_cache(const std::filesystem::path& file, const SuperpopTruth& t) {
  std::error_code ec;
  std::filesystem::create_directories(file.parent_path(), ec);
  const auto tmp = file.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp);
    if (!out) return;
    const auto strata = Stratum::all();
    for (std::size_t k = 0; k < 4; ++k) {
      const auto l = strata[k].label();
      out << "mu" << l << " " << num(t.mu[k]) << "\n";
      out << "mu0_" << l << " " << num(t.mu_arm[k][0]) << "\n";
      out << "mu1_" << l << " " << num(t.mu_arm[k][1]) << "\n";
      out << "e" << l << " " << num(t.proportion[k]) << "\n";
    }
    out << "mean_theta " << num(t.mean_theta) << "\n";
    out << "units " << t.units << "\n";
  }
  std::filesystem::rename(tmp, file, ec);
}

SuperpopTruth compute_truth(const DgpConfig& cfg, std::size_t units) {
  std::mt19937_64 rng(derive_seed(cfg.distribution_hash(), {0x5EED}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto strata = Stratum::all();
  std::array<long double, 4> se{};
  std::array<long double, 4> s0{};
  std::array<long double, 4> s1{};
  long double th = 0.0L;
  for (std::size_t i = 0; i < units; ++i) {
    const double s = normal(rng) + normal(rng) + normal(rng);
    const ThetaValue tv = cfg.theta_at(s);
    const StrataProbs c = cell_probs({cfg.p_at(0, s), cfg.p_at(1, s)}, tv);
    for (std::size_t k = 0; k < 4; ++k) {
      const double e = c.cell(strata[k]);
      se[k] += e;
      s0[k] += e * cfg.m_at(0, strata[k].d0, s);
      s1[k] += e * cfg.m_at(1, strata[k].d1, s);
    }
    if (tv.kind == ThetaKind::Finite) th += tv.value;
  }
  SuperpopTruth t;
  t.units = units;
  for (std::size_t k = 0; k < 4; ++k) {
    t.proportion[k] = static_cast<double>(se[k] / static_cast<long double>(units));
    if (se[k] > 0.0L) {
      t.mu_arm[k][0] = static_cast<double>(s0[k] / se[k]);
      t.mu_arm[k][1] = static_cast<double>(s1[k] / se[k]);
      t.mu[k] = static_cast<double>((s1[k] - s0[k]) / se[k]);
    } else {
      t.mu_arm[k] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
      t.mu[k] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  t.mean_theta = cfg.mode == ThetaTrueMode::Infinity ? std::numeric_limits<double>::infinity()
                                                     : static_cast<double>(th / static_cast<long double>(units));
  return t;
}

SensitivitySpec fitted_spec(const FittedTheta& f, const SimData& data, const SuperpopTruth& truth) {
  switch (f.kind) {
    case FittedThetaKind::Constant: return SensitivitySpec::constant(f.value);
    case FittedThetaKind::Monotone: return SensitivitySpec::monotone(true);
    case FittedThetaKind::Independence: return SensitivitySpec::independence();
    case FittedThetaKind::TruePerUnit: return SensitivitySpec::per_unit(data.theta);
    case FittedThetaKind::SuperpopMean: return SensitivitySpec::constant(truth.mean_theta);
  }
  return SensitivitySpec::independence();
}

struct RepOutcome {
  bool ok = false;
  double est = 0.0;
  double se = 0.0;
  bool covered = false;
  bool monotone_warning = false;
  bool small_denominator = false;
  std::string error;
};

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void DgpConfig::validate() const {
  if (n < 1) throw Error(ErrorCode::ConfigError, "n must be positive");
  if (mode == ThetaTrueMode::Constant && !(theta > 0.0 && std::isfinite(theta))) {
    throw Error(ErrorCode::ConfigError, "constant theta_true must be finite and positive");
  }
  if (mode == ThetaTrueMode::Covariate && !(cov_offset > 0.0)) {
    throw Error(ErrorCode::ConfigError, "covariate theta offset must be positive");
  }
  if (mode == ThetaTrueMode::Infinity && !(inf_intercept[1] > inf_intercept[0])) {
    throw Error(ErrorCode::ConfigError, "infinity mode needs inf_intercept[1] > inf_intercept[0] so that p1 > p0");
  }
  if (!(noise_sd > 0.0)) throw Error(ErrorCode::ConfigError, "noise_sd must be positive");
  std::mt19937_64 rng(0xC0FFEE);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int draws = 100000;
  std::array<int, 2> inside{};
  for (int i = 0; i < draws; ++i) {
    const double s = normal(rng) + normal(rng) + normal(rng);
    for (int z = 0; z < 2; ++z) {
      const double p = p_at(z, s);
      if (p > 0.05 && p < 0.95) ++inside[static_cast<std::size_t>(z)];
    }
  }
  for (int z = 0; z < 2; ++z) {
    if (inside[static_cast<std::size_t>(z)] < 0.99 * draws) {
      throw Error(ErrorCode::ConfigError, "p" + std::to_string(z) + "(X) leaves (0.05, 0.95) for more than 1% of X draws");
    }
  }
}

std::string DgpConfig::theta_label() const {
  switch (mode) {
    case ThetaTrueMode::Constant: {
      std::ostringstream os;
      os << theta;
      return os.str();
    }
    case ThetaTrueMode::Infinity: return "inf";
    case ThetaTrueMode::Covariate: return "cov";
  }
  return "?";
}

double DgpConfig::theta_key() const {
  switch (mode) {
    case ThetaTrueMode::Constant: return theta;
    case ThetaTrueMode::Infinity: return DBL_MAX;
    case ThetaTrueMode::Covariate: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

std::uint64_t DgpConfig::distribution_hash() const {
  std::ostringstream os;
  os << "dgp-v1|" << static_cast<int>(mode) << "|" << num(theta) << "|" << num(cov_offset) << "|" << num(pi_intercept) << "|"
     << num(pi_slope) << "|" << num(p_intercept[0]) << "|" << num(p_intercept[1]) << "|" << num(p_slope[0]) << "|"
     << num(p_slope[1]) << "|" << num(inf_intercept[0]) << "|" << num(inf_intercept[1]) << "|" << num(inf_slope) << "|"
     << num(y_base) << "|" << num(y_z) << "|" << num(y_x) << "|" << num(y_zx) << "|" << num(y_d) << "|" << num(noise_sd);
  return fnv1a64(os.str());
}

double DgpConfig::pi_at(double s) const { return expit(pi_intercept + pi_slope * s); }

double DgpConfig::p_at(int z, double s) const {
  const auto zi = static_cast<std::size_t>(z);
  if (mode == ThetaTrueMode::Infinity) return expit(inf_intercept[zi] + inf_slope * s);
  return expit(p_intercept[zi] + p_slope[zi] * s);
}

double DgpConfig::m_at(int z, int d, double s) const {
  return y_base + y_z * z + y_x * s + y_zx * z * s + y_d * d;
}

ThetaValue DgpConfig::theta_at(double s) const {
  switch (mode) {
    case ThetaTrueMode::Constant: return ThetaValue::finite(theta);
    case ThetaTrueMode::Infinity: return ThetaValue::infinite();
    case ThetaTrueMode::Covariate: return ThetaValue::finite(std::abs(s) + cov_offset);
  }
  return ThetaValue::independence();
}

Eigen::VectorXd true_pi(const DgpConfig& cfg, const Eigen::MatrixXd& x) {
  return row_sums(x).unaryExpr([&](double s) { return cfg.pi_at(s); });
}

Eigen::VectorXd true_p(const DgpConfig& cfg, int z, const Eigen::MatrixXd& x) {
  return row_sums(x).unaryExpr([&](double s) { return cfg.p_at(z, s); });
}

Eigen::VectorXd true_m(const DgpConfig& cfg, int z, int d, const Eigen::MatrixXd& x) {
  return row_sums(x).unaryExpr([&](double s) { return cfg.m_at(z, d, s); });
}

std::vector<double> true_theta(const DgpConfig& cfg, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd s = row_sums(x);
  std::vector<double> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const ThetaValue tv = cfg.theta_at(s[i]);
    out[static_cast<std::size_t>(i)] =
        tv.kind == ThetaKind::Finite ? tv.value : std::numeric_limits<double>::infinity();
  }
  return out;
}

NuisanceSpecs truth_specs(const DgpConfig& cfg) {
  NuisanceSpecs s;
  s.propensity = LearnerSpec::fixed_model(make_function_model([cfg](const Eigen::MatrixXd& x) { return true_pi(cfg, x); }, "true pi"));
  s.principal0 = LearnerSpec::fixed_model(make_function_model([cfg](const Eigen::MatrixXd& x) { return true_p(cfg, 0, x); }, "true p0"));
  s.principal1 = LearnerSpec::fixed_model(make_function_model([cfg](const Eigen::MatrixXd& x) { return true_p(cfg, 1, x); }, "true p1"));
  s.outcome = LearnerSpec::fixed_model(make_constant_model(0.0));
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) {
      s.outcome_cell[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)] = LearnerSpec::fixed_model(make_function_model(
          [cfg, z, d](const Eigen::MatrixXd& x) { return true_m(cfg, z, d, x); }, "true m" + std::to_string(z) + std::to_string(d)));
    }
  }
  return s;
}

SimData gen_dataset(const DgpConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(cfg.n);
  SimData out;
  Dataset& ds = out.ds;
  ds.x.resize(n, DgpConfig::p);
  ds.y.resize(n);
  ds.d.resize(cfg.n);
  ds.z.resize(cfg.n);
  ds.x_names = {"x1", "x2", "x3"};
  out.theta.resize(cfg.n);
  out.d0.resize(cfg.n);
  out.d1.resize(cfg.n);
  out.y0.resize(n);
  out.y1.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    double s = 0.0;
    for (int j = 0; j < DgpConfig::p; ++j) {
      ds.x(i, j) = normal(rng);
      s += ds.x(i, j);
    }
    const int z = unif(rng) < cfg.pi_at(s) ? 1 : 0;
    const ThetaValue tv = cfg.theta_at(s);
    out.theta[ii] = tv.kind == ThetaKind::Finite ? tv.value : std::numeric_limits<double>::infinity();
    const StrataProbs c = cell_probs({cfg.p_at(0, s), cfg.p_at(1, s)}, tv);
    const double u = unif(rng);
    int d0 = 0;
    int d1 = 0;
    if (u < c.e11) {
      d0 = d1 = 1;
    } else if (u < c.e11 + c.e10) {
      d0 = 1;
    } else if (u < c.e11 + c.e10 + c.e01) {
      d1 = 1;
    }
    const double e0 = normal(rng);
    const double e1 = normal(rng);
    out.d0[ii] = d0;
    out.d1[ii] = d1;
    out.y0[i] = cfg.m_at(0, d0, s) + cfg.noise_sd * e0;
    out.y1[i] = cfg.m_at(1, d1, s) + cfg.noise_sd * e1;
    ds.z[ii] = z;
    ds.d[ii] = z == 1 ? d1 : d0;
    ds.y[i] = z == 1 ? out.y1[i] : out.y0[i];
  }
  ds.x_transformed = transform_covariates(ds.x);
  return out;
}

Eigen::MatrixXd transform_covariates(const Eigen::MatrixXd& x) {
  if (x.cols() != 3) throw Error(ErrorCode::SchemaError, "transform_covariates needs 3 columns");
  Eigen::MatrixXd t(x.rows(), 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double x1 = x(i, 0);
    const double x2 = x(i, 1);
    const double x3 = x(i, 2);
    t(i, 0) = std::exp(x1 / 2.0);
    t(i, 1) = x2 / (1.0 + std::exp(x1)) + 10.0;
    t(i, 2) = std::pow(x1 * x3 / 25.0 + 0.6, 3.0);
  }
  return t;
}

Eigen::MatrixXd inverse_transform_covariates(const Eigen::MatrixXd& xt) {
  if (xt.cols() != 3) throw Error(ErrorCode::SchemaError, "inverse_transform_covariates needs 3 columns");
  Eigen::MatrixXd x(xt.rows(), 3);
  for (Eigen::Index i = 0; i < xt.rows(); ++i) {
    const double x1 = 2.0 * std::log(xt(i, 0));
    x(i, 0) = x1;
    x(i, 1) = (xt(i, 1) - 10.0) * (1.0 + std::exp(x1));
    x(i, 2) = x1 == 0.0 ? 0.0 : (std::cbrt(xt(i, 2)) - 0.6) * 25.0 / x1;
  }
  return x;
}

double SuperpopTruth::mu_of(Stratum s) const {
  const auto all = Stratum::all();
  return mu[static_cast<std::size_t>(std::find(all.begin(), all.end(), s) - all.begin())];
}

double SuperpopTruth::proportion_of(Stratum s) const {
  const auto all = Stratum::all();
  return proportion[static_cast<std::size_t>(std::find(all.begin(), all.end(), s) - all.begin())];
}

SuperpopTruth superpopulation_truth(const DgpConfig& cfg, std::size_t units, const std::string& cache_dir) {
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, std::size_t>, SuperpopTruth> memo;
  const auto key = std::make_pair(cfg.distribution_hash(), units);
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
  }
  char name[96];
  std::snprintf(name, sizeof name, "superpop_%016llx_%zu.txt", static_cast<unsigned long long>(key.first), units);
  const auto file = cache_root(cache_dir) / name;
  SuperpopTruth t;
  if (!read_cache(file, t) || t.units != units) {
    t = compute_truth(cfg, units);
    write_cache(file, t);
  }
  std::lock_guard<std::mutex> lock(mu);
  memo[key] = t;
  return t;
}

std::string FittedTheta::label() const {
  switch (kind) {
    case FittedThetaKind::Constant: {
      std::ostringstream os;
      os << value;
      return os.str();
    }
    case FittedThetaKind::Monotone: return "monotone";
    case FittedThetaKind::Independence: return "independence";
    case FittedThetaKind::TruePerUnit: return "true_theta_x";
    case FittedThetaKind::SuperpopMean: return "mean_theta";
  }
  return "?";
}

NuisanceSpecs design_specs(char design_spec, const LearnerSpec& propensity, const LearnerSpec& principal,
                           const LearnerSpec& outcome) {
  if (design_spec < 'a' || design_spec > 'e') {
    throw Error(ErrorCode::ConfigError, std::string("unknown design specification '") + design_spec + "' (a-e)");
  }
  const bool t_out = design_spec == 'b' || design_spec == 'e';
  const bool t_ps = design_spec == 'c' || design_spec == 'e';
  const bool t_pr = design_spec == 'd' || design_spec == 'e';
  auto pick = [](LearnerSpec s, bool t) {
    s.design = t ? DesignKind::Transformed : DesignKind::Raw;
    return s;
  };
  return {pick(propensity, t_ps), pick(principal, t_pr), pick(principal, t_pr), pick(outcome, t_out)};
}

NuisanceSpecs parametric_specs(char design_spec) {
  return design_specs(design_spec, LearnerSpec::logistic(), LearnerSpec::logistic(), LearnerSpec::ols());
}

void SimScenario::validate() const {
  dgp.validate();
  if (reps < 1) throw Error(ErrorCode::ConfigError, "reps must be at least 1");
  if (estimators.empty()) throw Error(ErrorCode::ConfigError, "scenario has no estimators");
  if (strata.empty()) throw Error(ErrorCode::ConfigError, "scenario has no strata");
  if (K < 2) throw Error(ErrorCode::ConfigError, "K must be at least 2");
  if (threads < 1) throw Error(ErrorCode::ConfigError, "threads must be at least 1");
  design_specs(design_spec, LearnerSpec::logistic(), LearnerSpec::logistic(), LearnerSpec::ols());
  ml_learner.validate();
  if (fitted.kind == FittedThetaKind::Constant && !(fitted.value > 0.0)) {
    throw Error(ErrorCode::ConfigError, "fitted theta must be positive");
  }
  if (fitted.kind == FittedThetaKind::TruePerUnit && dgp.mode == ThetaTrueMode::Infinity) {
    throw Error(ErrorCode::ConfigError, "true per-unit theta is infinite in infinity mode; use monotone");
  }
}

SimMetrics run_scenario(const SimScenario& sc) {
  sc.validate();
  const SuperpopTruth truth = superpopulation_truth(sc.dgp, sc.superpop_units, sc.cache_dir);
  const NuisanceSpecs par = parametric_specs(sc.design_spec);
  const NuisanceSpecs ml = design_specs(sc.design_spec, sc.ml_learner, sc.ml_learner, sc.ml_learner);
  const bool want_dml = std::find(sc.estimators.begin(), sc.estimators.end(), EstimatorKind::DML) != sc.estimators.end();
  const bool want_full = std::any_of(sc.estimators.begin(), sc.estimators.end(), [](EstimatorKind k) { return k != EstimatorKind::DML; });

  const std::size_t cells = sc.strata.size() * sc.estimators.size();
  std::vector<std::vector<RepOutcome>> results(static_cast<std::size_t>(sc.reps), std::vector<RepOutcome>(cells));

  auto run_rep = [&](int r) {
    auto& out = results[static_cast<std::size_t>(r)];
    const std::uint64_t seed = derive_seed(sc.master_seed, {static_cast<std::uint64_t>(r)});
    DgpConfig cfg = sc.dgp;
    cfg.seed = seed;
    std::string setup_error;
    SimData data;
    NuisanceFit full;
    CrossFit cross;
    SensitivitySpec spec;
    NuisanceOptions nopt;
    nopt.strata = sc.strata;
    nopt.outcome_defined_when_d0 = true;
    nopt.seed = derive_seed(seed, {1});
    std::string full_error;
    std::string dml_error;
    try {
      data = gen_dataset(cfg);
      spec = fitted_spec(sc.fitted, data, truth);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    if (setup_error.empty() && want_full) {
      try {
        full = fit_nuisances(data.ds, par, nopt);
      } catch (const std::exception& e) {
        full_error = e.what();
      }
    }
    if (setup_error.empty() && want_dml) {
      try {
        cross = crossfit_nuisances(data.ds, make_folds(data.ds, sc.K, derive_seed(seed, {2})), ml, nopt);
      } catch (const std::exception& e) {
        dml_error = e.what();
      }
    }
    EstimateOptions eo;
    eo.alpha = sc.alpha;
    eo.seed = derive_seed(seed, {3});
    eo.nuisance = nopt;
    eo.refit_specs = &par;
    eo.small_denominator = sc.unstable_tau;
    std::size_t c = 0;
    for (const auto& st : sc.strata) {
      for (auto k : sc.estimators) {
        RepOutcome& o = out[c++];
        const std::string& pre = !setup_error.empty() ? setup_error : (k == EstimatorKind::DML ? dml_error : full_error);
        if (!pre.empty()) {
          o.error = pre;
          continue;
        }
        try {
          EstimateOptions e = eo;
          e.variance = (k == EstimatorKind::WT || k == EstimatorKind::OR) && sc.bootstrap_B > 0 ? VarianceMethod::Bootstrap
                                                                                                : VarianceMethod::PlugIn;
          e.bootstrap_B = sc.bootstrap_B;
          const EstimateReport rep = k == EstimatorKind::DML ? mu_dml(data.ds, cross, spec, st, e)
                                                             : estimate(k, data.ds, full, spec, st, e);
          o.monotone_warning = rep.diag.has_warning("MonotonicityIncompatible");
          o.small_denominator = rep.diag.has_warning("SmallDenominator");
          if (!std::isfinite(rep.mu_hat) || !std::isfinite(rep.se)) {
            o.error = "non-finite estimate";
            continue;
          }
          o.ok = true;
          o.est = rep.mu_hat;
          o.se = rep.se;
          o.covered = rep.covers(truth.mu_of(st));
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      }
    }
  };

  if (sc.threads <= 1) {
    for (int r = 0; r < sc.reps; ++r) run_rep(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < sc.threads; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < sc.reps; r = next++) run_rep(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  SimMetrics m;
  m.theta_true = sc.dgp.theta_label();
  m.theta_key = sc.dgp.theta_key();
  m.fitted = sc.fitted.label();
  m.design_spec = sc.design_spec;
  m.n = sc.dgp.n;
  m.truth = truth;
  std::size_t c = 0;
  for (const auto& st : sc.strata) {
    for (auto k : sc.estimators) {
      MetricRow row;
      row.stratum = st;
      row.estimator = k;
      row.reps = sc.reps;
      row.mu_true = truth.mu_of(st);
      int covered = 0;
      for (int r = 0; r < sc.reps; ++r) {
        const RepOutcome& o = results[static_cast<std::size_t>(r)][c];
        row.monotone_warnings += o.monotone_warning ? 1 : 0;
        row.small_denominator += o.small_denominator ? 1 : 0;
        if (!o.ok) {
          ++row.failures;
          row.failure_log.push_back("rep " + std::to_string(r) + ": " + o.error);
        } else {
          row.estimates.push_back(o.est);
          row.ses.push_back(o.se);
          covered += o.covered ? 1 : 0;
        }
        if (!o.ok || o.monotone_warning || o.small_denominator) ++row.unstable;
      }
      const double ok = static_cast<double>(row.estimates.size());
      const double nan = std::numeric_limits<double>::quiet_NaN();
      if (ok > 0) {
        row.bias = std::accumulate(row.estimates.begin(), row.estimates.end(), 0.0) / ok - row.mu_true;
        row.aese = std::accumulate(row.ses.begin(), row.ses.end(), 0.0) / ok;
        row.sd = sample_sd(row.estimates);
        row.bias_mcse = row.sd / std::sqrt(ok);
        row.aese_mcse = sample_sd(row.ses) / std::sqrt(ok);
        row.sd_mcse = ok > 1 ? row.sd / std::sqrt(2.0 * (ok - 1.0)) : nan;
      } else {
        row.bias = row.aese = row.sd = row.bias_mcse = row.aese_mcse = row.sd_mcse = nan;
      }
      row.cp = static_cast<double>(covered) / static_cast<double>(sc.reps);
      row.cp_mcse = std::sqrt(row.cp * (1.0 - row.cp) / static_cast<double>(sc.reps));
      m.rows.push_back(std::move(row));
      ++c;
    }
  }
  return m;
}

Table summarize(const std::vector<SimMetrics>& metrics) {
  Table t;
  t.columns = {{"theta_true", ColumnType::Text}, {"fitted_theta", ColumnType::Text}, {"design_spec", ColumnType::Text},
               {"stratum", ColumnType::Text},    {"estimator", ColumnType::Text},    {"n", ColumnType::Number},
               {"reps", ColumnType::Number},     {"failures", ColumnType::Number},   {"unstable", ColumnType::Number},
               {"mu_true", ColumnType::Number},  {"bias", ColumnType::Number},       {"bias_mcse", ColumnType::Number},
               {"aese", ColumnType::Number},     {"aese_mcse", ColumnType::Number},  {"sd", ColumnType::Number},
               {"sd_mcse", ColumnType::Number},  {"cp", ColumnType::Number},         {"cp_mcse", ColumnType::Number}};
  struct Entry {
    std::tuple<double, char, std::string, std::string, std::string> key;
    std::vector<Cell> row;
  };
  std::vector<Entry> entries;
  for (const auto& m : metrics) {
    for (const auto& r : m.rows) {
      Entry e;
      e.key = {m.theta_key, m.design_spec, r.stratum.label(), to_string(r.estimator), m.fitted};
      e.row = {m.theta_true,
               m.fitted,
               std::string(1, m.design_spec),
               r.stratum.label(),
               to_string(r.estimator),
               static_cast<double>(m.n),
               static_cast<double>(r.reps),
               static_cast<double>(r.failures),
               static_cast<double>(r.unstable),
               r.mu_true,
               r.bias,
               r.bias_mcse,
               r.aese,
               r.aese_mcse,
               r.sd,
               r.sd_mcse,
               r.cp,
               r.cp_mcse};
      entries.push_back(std::move(e));
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
  for (auto& e : entries) t.add_row(std::move(e.row));
  return t;
}

}  // namespace prinstrat
