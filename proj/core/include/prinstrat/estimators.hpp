#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prinstrat/dataset.hpp"
#include "prinstrat/nuisance.hpp"
#include "prinstrat/strata.hpp"

namespace prinstrat {

enum class EstimatorKind { WT, OR, CDR, DML };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& name);

/// Per-unit ψ terms for arms z = 0, 1, with d_z taken from the stratum.
struct PsiTerms {
  std::array<Eigen::VectorXd, 2> psi_d;    // ψ_{D,z}
  std::array<Eigen::VectorXd, 2> psi_ind;  // ψ_{1(D=d_z),z}
  std::array<Eigen::VectorXd, 2> psi_y;    // ψ_{Y·1(D=d_z),z}
};

PsiTerms psi_terms(const Dataset& ds, const NuisanceFit& fit, Stratum s);

struct ScoreComponents {
  Stratum stratum{1, 1};
  PsiTerms psi;
  Eigen::VectorXd e;
  Eigen::VectorXd tau;
  std::array<Eigen::VectorXd, 2> omega;
  std::array<Eigen::VectorXd, 2> xi;
  Eigen::VectorXd phi;
  std::array<double, 2> mu_arm{};
  bool has_xi = false;
  bool has_omega = false;
};

/// e, τ and (when the outcome cells are fitted) ω⁰, ω¹ for every unit of `fit`.
ScoreComponents score_components(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                                 const AlgebraOptions& opt = {});
/// Completes ξ^z = ω^z − μ^z τ and φ = (ξ¹ − ξ⁰) / mean_e.
void attach_xi(ScoreComponents& sc, double mu0, double mu1, double mean_e);

Eigen::VectorXd tau(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                    const AlgebraOptions& opt = {});
Eigen::VectorXd omega(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s, int z,
                      const AlgebraOptions& opt = {});

enum class VarianceMethod { Default, PlugIn, Bootstrap };

struct EstimateOptions {
  double alpha = 0.05;
  VarianceMethod variance = VarianceMethod::Default;
  int bootstrap_B = 500;
  std::uint64_t seed = 0;
  /// Learners refit on each bootstrap resample; without them the bootstrap is unavailable.
  const NuisanceSpecs* refit_specs = nullptr;
  NuisanceOptions nuisance;
  AlgebraOptions algebra;
  double min_denominator = 1e-6;
  double small_denominator = 0.01;
};

struct FoldComponent {
  int fold = 0;
  std::size_t n = 0;
  double tau = 0.0;
  std::array<double, 2> omega{};
  double xi_sq = 0.0;
};

struct Diagnostics {
  double min_weight = std::numeric_limits<double>::quiet_NaN();
  double max_weight = std::numeric_limits<double>::quiet_NaN();
  double clipped_fraction = 0.0;
  int folds = 0;
  double frac_p1_le_p0 = 0.0;
  double mean_tau = std::numeric_limits<double>::quiet_NaN();
  double mean_e = std::numeric_limits<double>::quiet_NaN();
  std::string se_method;
  int bootstrap_failures = 0;
  std::vector<std::string> warnings;

  bool has_warning(const std::string& w) const;
};

struct EstimateReport {
  Stratum stratum{1, 1};
  std::string theta_summary;
  EstimatorKind estimator = EstimatorKind::CDR;
  double mu_hat = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 2> mu_arm{};
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.05;
  Diagnostics diag;
  std::vector<FoldComponent> fold_components;

  bool covers(double truth) const { return ci_lo <= truth && truth <= ci_hi; }
};

/// Two-sided Wald critical value z_{1−α/2}.
double normal_critical(double alpha);

EstimateReport mu_wt(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                     const EstimateOptions& opt = {});
EstimateReport mu_or(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                     const EstimateOptions& opt = {});
EstimateReport mu_cdr(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                      const EstimateOptions& opt = {});
EstimateReport mu_dml(const Dataset& ds, const CrossFit& cf, const SensitivitySpec& spec, Stratum s,
                      const EstimateOptions& opt = {});
EstimateReport mu_dml(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs, const SensitivitySpec& spec,
                      Stratum s, const EstimateOptions& opt = {});

/// Dispatch for the full-sample estimators (WT, OR, CDR).
EstimateReport estimate(EstimatorKind k, const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec,
                        Stratum s, const EstimateOptions& opt = {});

struct ProportionEstimate {
  Stratum stratum{1, 1};
  /// One-step estimate P_n τ; raw, may leave [0, 1] slightly.
  double estimate = 0.0;
  double se = 0.0;
  /// Plug-in P_n e(X).
  double plugin = 0.0;
};

ProportionEstimate strata_proportion(const Dataset& ds, const NuisanceFit& fit, const SensitivitySpec& spec, Stratum s,
                                     const AlgebraOptions& opt = {});
ProportionEstimate strata_proportion(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs,
                                     const SensitivitySpec& spec, Stratum s, const NuisanceOptions& nopt = {},
                                     const AlgebraOptions& opt = {});

struct SweepConfig {
  std::vector<Stratum> strata{{1, 1}};
  std::vector<EstimatorKind> estimators{EstimatorKind::DML};
  /// Full-sample learners for WT, OR and CDR.
  NuisanceSpecs specs;
  /// Cross-fitted learners for DML.
  NuisanceSpecs ml_specs = NuisanceSpecs::uniform(LearnerSpec::stacked({LearnerSpec::glm(), LearnerSpec::gbt()}));
  int K = 5;
  std::uint64_t seed = 0;
  bool include_monotone = false;
  bool include_independence = false;
  EstimateOptions est;
};

struct SweepPoint {
  std::string label;
  double log_theta = std::numeric_limits<double>::quiet_NaN();
  SensitivitySpec spec;
  std::vector<EstimateReport> reports;
  std::vector<ProportionEstimate> proportions;
  std::vector<std::string> errors;
};

struct SweepResult {
  std::vector<double> log_theta;
  std::vector<SweepPoint> points;
};

/// Evaluates every (spec, stratum, estimator) with nuisances fitted once and shared across specs.
std::vector<SweepPoint> evaluate_specs(const Dataset& ds, const std::vector<SensitivitySpec>& specs,
                                       const std::vector<std::string>& labels, const SweepConfig& cfg);

/// Constant θ = exp(g) for each grid value g (strictly increasing), plus optional references.
SweepResult sweep_theta(const Dataset& ds, const std::vector<double>& grid, const SweepConfig& cfg);

}  // namespace prinstrat
