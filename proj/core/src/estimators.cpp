#include "prinstrat/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "prinstrat/error.hpp"
#include "prinstrat/random.hpp"

namespace prinstrat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_alignment(const Dataset& ds, const NuisanceFit& fit) {
  for (auto r : fit.rows) {
    if (r >= ds.n()) throw Error(ErrorCode::ConfigError, "nuisance fit refers to rows outside the dataset");
  }
}

int arm_cell(Stratum s, int z) { return z == 1 ? s.d1 : s.d0; }

const Eigen::VectorXd& outcome_cell(const NuisanceFit& fit, Stratum s, int z) {
  const auto d = static_cast<std::size_t>(arm_cell(s, z));
  if (!fit.has_m[static_cast<std::size_t>(z)][d]) {
    throw Error(ErrorCode::ConfigError, "outcome model m" + std::to_string(z) + std::to_string(d) +
                                            " was not fitted; include stratum " + s.label() + " when fitting nuisances");
  }
  return fit.m[static_cast<std::size_t>(z)][d];
}

double mean(const Eigen::VectorXd& v) { return v.size() ? v.mean() : kNaN; }

void finish_ci(EstimateReport& r) {
  const double c = normal_critical(r.alpha);
  r.ci_lo = r.mu_hat - c * r.se;
  r.ci_hi = r.mu_hat + c * r.se;
}

void add_common_diagnostics(EstimateReport& r, const NuisanceFit& fit, const SensitivitySpec& spec,
                            const ScoreComponents& sc, const EstimateOptions& opt) {
  r.diag.clipped_fraction = fit.clipped_fraction;
  r.diag.frac_p1_le_p0 = fit.frac_p1_le_p0();
  r.diag.mean_tau = mean(sc.tau);
  r.diag.mean_e = mean(sc.e);
  if (spec.mode() == SensitivitySpec::Mode::Monotone && r.diag.frac_p1_le_p0 > 0.0) {
    std::ostringstream os;
    os << "MonotonicityIncompatible: p1_hat <= p0_hat for " << r.diag.frac_p1_le_p0 * 100.0 << "% of units";
    r.diag.warnings.push_back(os.str());
  }
  if (!(r.diag.mean_tau >= opt.small_denominator)) {
    std::ostringstream os;
    os << "SmallDenominator: mean tau = " << r.diag.mean_tau;
    r.diag.warnings.push_back(os.str());
  }
}

double check_denominator(double mean_tau, const EstimateOptions& opt) {
  if (!(std::abs(mean_tau) >= opt.min_denominator)) {
    std::ostringstream os;
    os << "|P_n tau| = " << std::abs(mean_tau) << " below " << opt.min_denominator;
    throw Error(ErrorCode::NearZeroDenominator, os.str());
  }
  return mean_tau;
}

// Plug-in EIF variance P_n{(ξ¹−ξ⁰)²}/(P_n τ)²/n with ξ at the given arm means.
double plugin_se(ScoreComponents& sc, double mu0, double mu1) {
  const double mt = sc.tau.mean();
  attach_xi(sc, mu0, mu1, mt);
  const double n = static_cast<double>(sc.tau.size());
  const double v = (sc.xi[1] - sc.xi[0]).squaredNorm() / n / (mt * mt) / n;
  return std::sqrt(v);
}

using PointFn = std::function<double(const Dataset&, const NuisanceFit&, const SensitivitySpec&)>;

// Nonparametric bootstrap with nuisances refit on every resample.
double bootstrap_se(const Dataset& ds, const SensitivitySpec& spec, Stratum s, const EstimateOptions& opt,
                    const PointFn& point, int& failures) {
  std::mt19937_64 rng(derive_seed(opt.seed, {0xB007}));
  std::uniform_int_distribution<std::size_t> pick(0, ds.n() - 1);
  NuisanceOptions nopt = opt.nuisance;
  if (std::find(nopt.strata.begin(), nopt.strata.end(), s) == nopt.strata.end()) nopt.strata.push_back(s);
  std::vector<double> est;
  est.reserve(static_cast<std::size_t>(opt.bootstrap_B));
  failures = 0;
  std::vector<std::size_t> rows(ds.n());
  for (int b = 0; b < opt.bootstrap_B; ++b) {
    for (auto& r : rows) r = pick(rng);
    try {
      const Dataset db = ds.subset(rows);
      const SensitivitySpec sb = spec.subset(rows);
      nopt.seed = derive_seed(opt.seed, {0xB007, static_cast<std::uint64_t>(b)});
      const NuisanceFit fb = fit_nuisances(db, *opt.refit_specs, nopt);
      const double v = point(db, fb, sb);
      if (std::isfinite(v)) {
        est.push_back(v);
      } else {
        ++failures;
      }
    } catch (const Error&) {
      ++failures;
    }
  }
  if (est.size() < 2) return kNaN;
  const double m = std::accumulate(est.begin(), est.end(), 0.0) / static_cast<double>(est.size());
  double ss = 0.0;
  for (double v : est) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(est.size() - 1));
}

bool use_bootstrap(EstimatorKind k, const EstimateOptions& opt) {
  if (opt.variance == VarianceMethod::Bootstrap) return true;
  if (opt.variance == VarianceMethod::PlugIn) return false;
  return (k == EstimatorKind::WT || k == EstimatorKind::OR) && opt.refit_specs != nullptr && opt.bootstrap_B > 1;
}

void assign_se(EstimateReport& r, EstimatorKind k, const Dataset& ds, const SensitivitySpec& spec, Stratum s,
               const EstimateOptions& opt, ScoreComponents& sc, const PointFn& point) {
  if (use_bootstrap(k, opt)) {
    if (opt.refit_specs == nullptr) {
      throw Error(ErrorCode::ConfigError, "bootstrap variance needs refit learner specs");
    }
    r.se = bootstrap_se(ds, spec, s, opt, point, r.diag.bootstrap_failures);
    r.diag.se_method = "bootstrap(B=" + std::to_string(opt.bootstrap_B) + ")";
    if (r.diag.bootstrap_failures > 0) {
      r.diag.warnings.push_back("BootstrapFailures: " + std::to_string(r.diag.bootstrap_failures));
    }
  } else {
    r.se = plugin_se(sc, r.mu_arm[0], r.mu_arm[1]);
    r.diag.se_method = "plugin_eif";
  }
  finish_ci(r);
}

EstimateReport base_report(EstimatorKind k, const SensitivitySpec& spec, Stratum s, const EstimateOptions& opt) {
  EstimateReport r;
  r.stratum = s;
  r.theta_summary = spec.summary();
  r.estimator = k;
  r.alpha = opt.alpha;
  return r;
}

std::array<double, 2> wt_arms(const Dataset& ds, const NuisanceFit& fit, const ScoreComponents& sc, Stratum s,
                              double* wmin, double* wmax) {
  std::array<double, 2> mu{};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int z = 0; z < 2; ++z) {
    const int dz = arm_cell(s, z);
    double num = 0.0;
    double den = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < fit.size(); ++j) {
      const auto r = fit.rows[j];
      if (ds.z[r] != z || ds.d[r] != dz) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double pz = z == 1 ? fit.pi[jj] : 1.0 - fit.pi[jj];
      const double pd = z == 1 ? fit.p1[jj] : fit.p0[jj];
      const double q = dz == 1 ? pd : 1.0 - pd;
      const double w = sc.e[jj] / (pz * q);
      const double y = ds.y[static_cast<Eigen::Index>(r)];
      if (!std::isfinite(y)) {
        throw Error(ErrorCode::UndefinedOutcome, "missing outcome at row " + std::to_string(r));
      }
      num += w * y;
      den += w;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
      ++count;
    }
    if (count == 0) {
      throw Error(ErrorCode::EmptyCell, "no rows with Z=" + std::to_string(z) + ", D=" + std::to_string(dz));
    }
    if (!(std::abs(den) > 0.0)) {
      throw Error(ErrorCode::NearZeroDenominator, "weights sum to zero in arm " + std::to_string(z));
    }
    mu[static_cast<std::size_t>(z)] = num / den;
  }
  if (wmin) *wmin = lo;
  if (wmax) *wmax = hi;
  return mu;
}

std::array<double, 2> or_arms(const NuisanceFit& fit, const ScoreComponents& sc, Stratum s, const EstimateOptions& opt) {
  const double se = check_denominator(sc.e.sum() / static_cast<double>(sc.e.size()), opt);
  std::array<double, 2> mu{};
  for (int z = 0; z < 2; ++z) {
    mu[static_cast<std::size_t>(z)] = sc.e.dot(outcome_cell(fit, s, z)) / static_cast<double>(sc.e.size()) / se;
  }
  return mu;
}

NuisanceOptions with_stratum(NuisanceOptions o, Stratum s) {
  if (std::find(o.strata.begin(), o.strata.end(), s) == o.strata.end()) o.strata.push_back(s);
  return o;
}

}  // namespace

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::WT: return "wt";
    case EstimatorKind::OR: return "or";
    case EstimatorKind::CDR: return "cdr";
    case EstimatorKind::DML: return "dml";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "wt") return EstimatorKind::WT;
  if (s == "or") return EstimatorKind::OR;
  if (s == "cdr") return EstimatorKind::CDR;
  if (s == "dml") return EstimatorKind::DML;
  throw Error(ErrorCode::ConfigError, "unknown estimator '" + name + "' (wt, or, cdr, dml)");
}

bool Diagnostics::has_warning(const std::string& w) const {
  return std::any_of(warnings.begin(), warnings.end(), [&](const std::string& s) { return s.rfind(w, 0) == 0; });
}

double normal_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
}

PsiTerms psi_terms(const Dataset& ds, const NuisanceFit& fit, Stratum s) {
  check_alignment(ds, fit);
  const auto n = static_cast<Eigen::Index>(fit.size());
  PsiTerms out;
  for (int z = 0; z < 2; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    const int dz = arm_cell(s, z);
    const bool with_y = fit.has_m[zi][static_cast<std::size_t>(dz)];
    out.psi_d[zi].resize(n);
    out.psi_ind[zi].resize(n);
    if (with_y) out.psi_y[zi].resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto r = fit.rows[static_cast<std::size_t>(j)];
      const double pz = z == 1 ? fit.pi[j] : 1.0 - fit.pi[j];
      const double pd = z == 1 ? fit.p1[j] : fit.p0[j];
      const double q = dz == 1 ? pd : 1.0 - pd;
      const bool in_arm = ds.z[r] == z;
      const double dd = static_cast<double>(ds.d[r]);
      const bool in_cell = in_arm && ds.d[r] == dz;
      out.psi_d[zi][j] = (in_arm ? (dd - pd) / pz : 0.0) + pd;
      out.psi_ind[zi][j] = (in_arm ? ((in_cell ? 1.0 : 0.0) - q) / pz : 0.0) + q;
      if (with_y) {
        const double mq = fit.m[zi][static_cast<std::size_t>(dz)][j] * q;
        double yv = 0.0;
        if (in_cell) {
          yv = ds.y[static_cast<Eigen::Index>(r)];
          if (!std::isfinite(yv)) throw Error(ErrorCode::UndefinedOutcome, "missing outcome at row " + std::to_string(r));
        }
        out.psi_y[zi][j] = (in_arm ? (yv - mq) / pz : 0.0) + mq;
      }
    }
  }
  return out;
}

ScoreComponents score_components(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                                 const AlgebraOptions& opt) {
  ScoreComponents sc;
  sc.stratum = s;
  sc.psi = psi_terms(ds, fit, s);
  const auto n = static_cast<Eigen::Index>(fit.size());
  sc.e.resize(n);
  sc.tau.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto r = fit.rows[static_cast<std::size_t>(j)];
    const MarginPair mp{fit.p0[j], fit.p1[j]};
    const ThetaValue th = spec.at(r);
    sc.e[j] = cell_probs(mp, th, opt).cell(s);
    const auto [a0, a1] = cell_partials(mp, th, s, opt);
    sc.tau[j] = sc.e[j] + (sc.psi.psi_d[0][j] - mp.p0) * a0 + (sc.psi.psi_d[1][j] - mp.p1) * a1;
  }
  sc.has_omega = sc.psi.psi_y[0].size() == n && sc.psi.psi_y[1].size() == n;
  if (sc.has_omega) {
    for (int z = 0; z < 2; ++z) {
      const auto zi = static_cast<std::size_t>(z);
      const int dz = arm_cell(s, z);
      const Eigen::VectorXd& m = fit.m[zi][static_cast<std::size_t>(dz)];
      sc.omega[zi].resize(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double pd = z == 1 ? fit.p1[j] : fit.p0[j];
        const double q = dz == 1 ? pd : 1.0 - pd;
        sc.omega[zi][j] = sc.e[j] / q * (sc.psi.psi_y[zi][j] - m[j] * sc.psi.psi_ind[zi][j]) + sc.tau[j] * m[j];
      }
    }
  }
  return sc;
}

void attach_xi(ScoreComponents& sc, double mu0, double mu1, double mean_e) {
  if (!sc.has_omega) throw Error(ErrorCode::ConfigError, "omega unavailable: outcome cells were not fitted");
  sc.mu_arm = {mu0, mu1};
  sc.xi[0] = sc.omega[0] - mu0 * sc.tau;
  sc.xi[1] = sc.omega[1] - mu1 * sc.tau;
  sc.phi = (sc.xi[1] - sc.xi[0]) / mean_e;
  sc.has_xi = true;
}

Eigen::VectorXd tau(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                    const AlgebraOptions& opt) {
  return score_components(ds, fit, spec, s, opt).tau;
}

Eigen::VectorXd omega(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s, int z,
                      const AlgebraOptions& opt) {
  auto sc = score_components(ds, fit, spec, s, opt);
  if (!sc.has_omega) throw Error(ErrorCode::ConfigError, "omega unavailable: outcome cells were not fitted");
  return sc.omega[static_cast<std::size_t>(z)];
}

EstimateReport mu_wt(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                     const EstimateOptions& opt) {
  ScoreComponents sc = score_components(ds, fit, spec, s, opt.algebra);
  EstimateReport r = base_report(EstimatorKind::WT, spec, s, opt);
  r.mu_arm = wt_arms(ds, fit, sc, s, &r.diag.min_weight, &r.diag.max_weight);
  r.mu_hat = r.mu_arm[1] - r.mu_arm[0];
  add_common_diagnostics(r, fit, spec, sc, opt);
  const PointFn point = [&](const Dataset& d, const NuisanceFit& f, const SensitivitySpec& sp) {
    auto c = score_components(d, f, sp, s, opt.algebra);
    auto mu = wt_arms(d, f, c, s, nullptr, nullptr);
    return mu[1] - mu[0];
  };
  assign_se(r, EstimatorKind::WT, ds, spec, s, opt, sc, point);
  return r;
}

EstimateReport mu_or(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                     const EstimateOptions& opt) {
  ScoreComponents sc = score_components(ds, fit, spec, s, opt.algebra);
  EstimateReport r = base_report(EstimatorKind::OR, spec, s, opt);
  r.mu_arm = or_arms(fit, sc, s, opt);
  r.mu_hat = r.mu_arm[1] - r.mu_arm[0];
  add_common_diagnostics(r, fit, spec, sc, opt);
  const PointFn point = [&](const Dataset& d, const NuisanceFit& f, const SensitivitySpec& sp) {
    auto c = score_components(d, f, sp, s, opt.algebra);
    auto mu = or_arms(f, c, s, opt);
    return mu[1] - mu[0];
  };
  assign_se(r, EstimatorKind::OR, ds, spec, s, opt, sc, point);
  return r;
}

EstimateReport mu_cdr(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                      const EstimateOptions& opt) {
  ScoreComponents sc = score_components(ds, fit, spec, s, opt.algebra);
  if (!sc.has_omega) throw Error(ErrorCode::ConfigError, "outcome cells for stratum " + s.label() + " were not fitted");
  EstimateReport r = base_report(EstimatorKind::CDR, spec, s, opt);
  const double mt = check_denominator(sc.tau.mean(), opt);
  r.mu_arm = {sc.omega[0].mean() / mt, sc.omega[1].mean() / mt};
  r.mu_hat = (sc.omega[1] - sc.omega[0]).mean() / mt;
  add_common_diagnostics(r, fit, spec, sc, opt);
  const PointFn point = [&](const Dataset& d, const NuisanceFit& f, const SensitivitySpec& sp) {
    auto c = score_components(d, f, sp, s, opt.algebra);
    return (c.omega[1] - c.omega[0]).mean() / check_denominator(c.tau.mean(), opt);
  };
  assign_se(r, EstimatorKind::CDR, ds, spec, s, opt, sc, point);
  return r;
}

EstimateReport mu_dml(const Dataset& ds, const CrossFit& cf, const SensitivitySpec& spec, Stratum s,
                      const EstimateOptions& opt) {
  const NuisanceFit& fit = cf.combined;
  ScoreComponents sc = score_components(ds, fit, spec, s, opt.algebra);
  if (!sc.has_omega) throw Error(ErrorCode::ConfigError, "outcome cells for stratum " + s.label() + " were not fitted");
  EstimateReport r = base_report(EstimatorKind::DML, spec, s, opt);
  const int K = cf.plan.K;
  std::vector<FoldComponent> comp(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) comp[static_cast<std::size_t>(k)].fold = k + 1;
  for (std::size_t j = 0; j < fit.size(); ++j) {
    auto& c = comp[static_cast<std::size_t>(cf.plan.assignment[fit.rows[j]] - 1)];
    const auto jj = static_cast<Eigen::Index>(j);
    ++c.n;
    c.tau += sc.tau[jj];
    c.omega[0] += sc.omega[0][jj];
    c.omega[1] += sc.omega[1][jj];
  }
  double num = 0.0;
  double den = 0.0;
  std::array<double, 2> arm{};
  for (auto& c : comp) {
    if (c.n == 0) throw Error(ErrorCode::SparseCell, "fold " + std::to_string(c.fold) + " is empty");
    num += c.omega[1] - c.omega[0];
    den += c.tau;
    arm[0] += c.omega[0];
    arm[1] += c.omega[1];
    const double nk = static_cast<double>(c.n);
    c.tau /= nk;
    c.omega[0] /= nk;
    c.omega[1] /= nk;
  }
  const double n = static_cast<double>(fit.size());
  check_denominator(den / n, opt);
  for (const auto& c : comp) check_denominator(c.tau, opt);
  r.mu_hat = num / den;
  r.mu_arm = {arm[0] / den, arm[1] / den};

  // Cross-fitted variance with per-fold arm means ω̄^{z,k}/τ̄^k.
  sc.xi[0].resize(sc.tau.size());
  sc.xi[1].resize(sc.tau.size());
  for (std::size_t j = 0; j < fit.size(); ++j) {
    auto& c = comp[static_cast<std::size_t>(cf.plan.assignment[fit.rows[j]] - 1)];
    const auto jj = static_cast<Eigen::Index>(j);
    sc.xi[0][jj] = sc.omega[0][jj] - c.omega[0] / c.tau * sc.tau[jj];
    sc.xi[1][jj] = sc.omega[1][jj] - c.omega[1] / c.tau * sc.tau[jj];
    const double dxi = sc.xi[1][jj] - sc.xi[0][jj];
    c.xi_sq += dxi * dxi;
  }
  double v = 0.0;
  for (auto& c : comp) {
    c.xi_sq /= static_cast<double>(c.n);
    v += static_cast<double>(c.n) / (c.tau * c.tau) * c.xi_sq;
  }
  v /= n;
  sc.has_xi = true;
  r.se = std::sqrt(v / n);
  r.diag.se_method = "crossfit_eif";
  r.diag.folds = K;
  r.fold_components = std::move(comp);
  add_common_diagnostics(r, fit, spec, sc, opt);
  finish_ci(r);
  return r;
}

EstimateReport mu_dml(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs, const SensitivitySpec& spec,
                      Stratum s, const EstimateOptions& opt) {
  const CrossFit cf = crossfit_nuisances(ds, plan, specs, with_stratum(opt.nuisance, s));
  return mu_dml(ds, cf, spec, s, opt);
}

EstimateReport estimate(EstimatorKind k, const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec,
                        Stratum s, const EstimateOptions& opt) {
  switch (k) {
    case EstimatorKind::WT: return mu_wt(ds, fit, spec, s, opt);
    case EstimatorKind::OR: return mu_or(ds, fit, spec, s, opt);
    case EstimatorKind::CDR: return mu_cdr(ds, fit, spec, s, opt);
    case EstimatorKind::DML: break;
  }
  throw Error(ErrorCode::ConfigError, "DML needs a cross-fit; call mu_dml");
}

ProportionEstimate strata_proportion(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                                     const AlgebraOptions& opt) {
  const ScoreComponents sc = score_components(ds, fit, spec, s, opt);
  ProportionEstimate p;
  p.stratum = s;
  const double n = static_cast<double>(sc.tau.size());
  p.estimate = sc.tau.mean();
  p.plugin = sc.e.mean();
  p.se = std::sqrt((sc.tau.array() - p.estimate).square().sum() / n / n);
  return p;
}

ProportionEstimate strata_proportion(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs,
                                     const SensitivitySpec& spec, Stratum s, const NuisanceOptions& nopt,
                                     const AlgebraOptions& opt) {
  NuisanceOptions o = nopt;
  o.strata.clear();
  const CrossFit cf = crossfit_nuisances(ds, plan, specs, o);
  return strata_proportion(ds, cf.combined, spec, s, opt);
}

std::vector<SweepPoint> evaluate_specs(const Dataset& ds, const std::vector<SensitivitySpec>& specs,
                                       const std::vector<std::string>& labels, const SweepConfig& cfg) {
  NuisanceOptions nopt = cfg.est.nuisance;
  for (const auto& s : cfg.strata) nopt = with_stratum(nopt, s);
  nopt.seed = cfg.seed;

  const bool want_dml = std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorKind::DML) != cfg.estimators.end();
  const bool want_full = std::any_of(cfg.estimators.begin(), cfg.estimators.end(),
                                     [](EstimatorKind k) { return k != EstimatorKind::DML; });
  NuisanceFit full;
  CrossFit cross;
  if (want_full) full = fit_nuisances(ds, cfg.specs, nopt);
  if (want_dml) cross = crossfit_nuisances(ds, make_folds(ds, cfg.K, cfg.seed), cfg.ml_specs, nopt);
  const NuisanceFit& shared = want_dml ? cross.combined : full;

  EstimateOptions eo = cfg.est;
  eo.nuisance = nopt;
  if (eo.refit_specs == nullptr) eo.refit_specs = &cfg.specs;

  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    SweepPoint pt;
    pt.spec = specs[i];
    pt.label = i < labels.size() ? labels[i] : specs[i].summary();
    for (const auto& s : cfg.strata) {
      for (auto k : cfg.estimators) {
        try {
          pt.reports.push_back(k == EstimatorKind::DML ? mu_dml(ds, cross, specs[i], s, eo)
                                                       : estimate(k, ds, full, specs[i], s, eo));
        } catch (const Error& e) {
          pt.errors.push_back(s.label() + "/" + to_string(k) + ": " + e.what());
        }
      }
    }
    for (const auto& s : Stratum::all()) {
      try {
        pt.proportions.push_back(strata_proportion(ds, shared, specs[i], s, eo.algebra));
      } catch (const Error& e) {
        pt.errors.push_back("proportion " + s.label() + ": " + e.what());
      }
    }
    out.push_back(std::move(pt));
  }
  return out;
}

SweepResult sweep_theta(const Dataset& ds, const std::vector<double>& grid, const SweepConfig& cfg) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) throw Error(ErrorCode::ConfigError, "theta grid values must be finite");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw Error(ErrorCode::ConfigError, "theta grid must be strictly increasing");
  }
  std::vector<SensitivitySpec> specs;
  std::vector<std::string> labels;
  for (double g : grid) {
    specs.push_back(SensitivitySpec::constant(std::exp(g)));
    labels.push_back(specs.back().summary());
  }
  if (cfg.include_monotone) {
    specs.push_back(SensitivitySpec::monotone(true));
    labels.emplace_back("monotone");
  }
  if (cfg.include_independence) {
    specs.push_back(SensitivitySpec::independence());
    labels.emplace_back("independence");
  }
  SweepResult res;
  res.log_theta = grid;
  res.points = evaluate_specs(ds, specs, labels, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i) res.points[i].log_theta = grid[i];
  return res;
}

}  // namespace prinstrat
