#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prinstrat/dataset.hpp"
#include "prinstrat/estimators.hpp"
#include "prinstrat/nuisance.hpp"
#include "prinstrat/strata.hpp"
#include "prinstrat/table.hpp"

namespace prinstrat {

enum class ThetaTrueMode { Constant, Infinity, Covariate };

/// Data-generating process with X ~ N(0, I_3) and s = 1ᵀX:
///   π(X) = expit(pi_intercept + pi_slope·s)
///   p_z(X) = expit(p_intercept[z] + p_slope[z]·s)   (Infinity mode: inf_intercept[z] + inf_slope·s)
///   Y(z) = y_base + y_z·z + y_x·s + y_zx·z·s + y_d·D(z) + N(0, noise_sd²)
///   θ(X) = theta, +∞, or |s| + cov_offset.
struct DgpConfig {
  std::size_t n = 500;
  ThetaTrueMode mode = ThetaTrueMode::Constant;
  double theta = 0.5;
  double cov_offset = 0.1;
  double pi_intercept = 0.0;
  double pi_slope = 0.25;
  std::array<double, 2> p_intercept{0.0, 0.0};
  std::array<double, 2> p_slope{0.5, 0.25};
  std::array<double, 2> inf_intercept{-1.0, 1.0};
  double inf_slope = 0.4;
  double y_base = 1.0;
  double y_z = 1.0;
  double y_x = 0.5;
  double y_zx = 0.25;
  double y_d = 2.0;
  double noise_sd = 0.25;
  std::uint64_t seed = 0;

  static constexpr int p = 3;

  /// Checks parameters and that p_z(X) ∈ (0.05, 0.95) for at least 99% of X draws.
  void validate() const;
  /// "0.5", "inf" or "cov".
  std::string theta_label() const;
  /// Sort key: θ for Constant, DBL_MAX for Infinity, +inf for Covariate.
  double theta_key() const;
  /// Hash of every field that affects the distribution (n and seed excluded).
  std::uint64_t distribution_hash() const;

  double pi_at(double s) const;
  double p_at(int z, double s) const;
  double m_at(int z, int d, double s) const;
  ThetaValue theta_at(double s) const;
};

Eigen::VectorXd true_pi(const DgpConfig& cfg, const Eigen::MatrixXd& x);
Eigen::VectorXd true_p(const DgpConfig& cfg, int z, const Eigen::MatrixXd& x);
Eigen::VectorXd true_m(const DgpConfig& cfg, int z, int d, const Eigen::MatrixXd& x);
/// Per-row θ(X) (finite values; Covariate mode only).
std::vector<double> true_theta(const DgpConfig& cfg, const Eigen::MatrixXd& x);
/// Fixed learners returning the true nuisance functions of the raw covariates.
NuisanceSpecs truth_specs(const DgpConfig& cfg);

struct SimData {
  Dataset ds;
  std::vector<double> theta;
  std::vector<int> d0;
  std::vector<int> d1;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
};

/// Simulates cfg.n units from cfg with cfg.seed; sets ds.x_transformed.
SimData gen_dataset(const DgpConfig& cfg);

/// x̃₁ = exp(x₁/2), x̃₂ = x₂/(1+exp(x₁)) + 10, x̃₃ = (x₁x₃/25 + 0.6)³.
Eigen::MatrixXd transform_covariates(const Eigen::MatrixXd& x);
Eigen::MatrixXd inverse_transform_covariates(const Eigen::MatrixXd& xt);

struct SuperpopTruth {
  /// Indexed in Stratum::all() order (11, 01, 00, 10).
  std::array<double, 4> mu{};
  std::array<std::array<double, 2>, 4> mu_arm{};
  std::array<double, 4> proportion{};
  double mean_theta = 0.0;
  std::size_t units = 0;

  double mu_of(Stratum s) const;
  double proportion_of(Stratum s) const;
};

/// Super-population PCEs. Conditional means given X are averaged over `units` draws of X, which
/// removes outcome and stratum sampling noise from the Monte Carlo truth. Results are memoized in
/// process and cached on disk under `cache_dir` (empty: $PRINSTRAT_CACHE_DIR or the temp dir).
SuperpopTruth superpopulation_truth(const DgpConfig& cfg, std::size_t units = 10'000'000,
                                    const std::string& cache_dir = "");

enum class FittedThetaKind { Constant, Monotone, Independence, TruePerUnit, SuperpopMean };

struct FittedTheta {
  FittedThetaKind kind = FittedThetaKind::Constant;
  double value = 1.0;

  static FittedTheta constant(double v) { return {FittedThetaKind::Constant, v}; }
  static FittedTheta monotone() { return {FittedThetaKind::Monotone, 0.0}; }
  static FittedTheta independence() { return {FittedThetaKind::Independence, 1.0}; }
  static FittedTheta true_per_unit() { return {FittedThetaKind::TruePerUnit, 0.0}; }
  static FittedTheta superpop_mean() { return {FittedThetaKind::SuperpopMean, 0.0}; }
  std::string label() const;
};

/// Parametric learners for design specification a–e:
/// a none transformed, b outcome, c propensity, d principal, e all.
NuisanceSpecs design_specs(char design_spec, const LearnerSpec& propensity, const LearnerSpec& principal,
                           const LearnerSpec& outcome);
NuisanceSpecs parametric_specs(char design_spec);

struct SimScenario {
  DgpConfig dgp;
  FittedTheta fitted;
  char design_spec = 'a';
  std::vector<EstimatorKind> estimators{EstimatorKind::CDR};
  int reps = 1000;
  std::vector<Stratum> strata{{1, 1}};
  int K = 5;
  LearnerSpec ml_learner = LearnerSpec::stacked({LearnerSpec::glm(), LearnerSpec::gbt()});
  std::uint64_t master_seed = 1;
  int threads = 1;
  double alpha = 0.05;
  /// Bootstrap B for WT/OR; 0 uses the plug-in EIF standard error.
  int bootstrap_B = 0;
  std::size_t superpop_units = 10'000'000;
  std::string cache_dir;
  /// A replicate is flagged unstable when P_n τ falls below this, or on any warning or failure.
  double unstable_tau = 0.01;

  void validate() const;
};

struct MetricRow {
  Stratum stratum{1, 1};
  EstimatorKind estimator = EstimatorKind::CDR;
  int reps = 0;
  int failures = 0;
  int unstable = 0;
  int monotone_warnings = 0;
  int small_denominator = 0;
  double mu_true = 0.0;
  double bias = 0.0;
  double bias_mcse = 0.0;
  double aese = 0.0;
  double aese_mcse = 0.0;
  double sd = 0.0;
  double sd_mcse = 0.0;
  double cp = 0.0;
  double cp_mcse = 0.0;
  std::vector<double> estimates;
  std::vector<double> ses;
  std::vector<std::string> failure_log;
};

struct SimMetrics {
  std::string theta_true;
  double theta_key = 0.0;
  std::string fitted;
  char design_spec = 'a';
  std::size_t n = 0;
  SuperpopTruth truth;
  std::vector<MetricRow> rows;
};

SimMetrics run_scenario(const SimScenario& s);

/// Flattens metrics to a table sorted by (θ_true, spec, stratum, estimator, fitted θ).
Table summarize(const std::vector<SimMetrics>& metrics);

}  // namespace prinstrat
