#pragma once

#include <array>
#include <optional>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prinstrat/dataset.hpp"
#include "prinstrat/learners.hpp"
#include "prinstrat/strata.hpp"

namespace prinstrat {

struct NuisanceSpecs {
  LearnerSpec propensity = LearnerSpec::glm();
  LearnerSpec principal0 = LearnerSpec::glm();
  LearnerSpec principal1 = LearnerSpec::glm();
  LearnerSpec outcome = LearnerSpec::glm();
  /// Per-cell replacement for `outcome`, indexed [z][d].
  std::array<std::array<std::optional<LearnerSpec>, 2>, 2> outcome_cell{};

  const LearnerSpec& outcome_for(int z, int d) const;

  /// The same learner for all five nuisances.
  static NuisanceSpecs uniform(const LearnerSpec& s) { return {s, s, s, s}; }
};

struct NuisanceOptions {
  double clip = 0.01;
  /// Permits fitting m_{z0}; otherwise strata that need D = 0 outcomes raise UndefinedOutcome.
  bool outcome_defined_when_d0 = false;
  /// Strata whose outcome cells must be fitted.
  std::vector<Stratum> strata{{1, 1}};
  std::uint64_t seed = 0;
};

/// Outcome cells (z, d) read by the given strata, as a 2x2 mask indexed [z][d].
std::array<std::array<bool, 2>, 2> needed_outcome_cells(const std::vector<Stratum>& strata);

/// Fitted models for the five nuisance functions.
struct NuisanceModels {
  ModelPtr pi;
  ModelPtr p0;
  ModelPtr p1;
  std::array<std::array<ModelPtr, 2>, 2> m{};
  NuisanceSpecs specs;
  std::vector<std::string> meta;
};

/// Per-unit nuisance predictions on an evaluation set. Index j refers to dataset row rows[j].
struct NuisanceFit {
  std::vector<std::size_t> rows;
  Eigen::VectorXd pi;
  Eigen::VectorXd p0;
  Eigen::VectorXd p1;
  std::array<std::array<Eigen::VectorXd, 2>, 2> m;
  std::array<std::array<bool, 2>, 2> has_m{};
  std::vector<std::string> learner_meta;
  double clipped_fraction = 0.0;

  std::size_t size() const { return rows.size(); }
  /// Fraction of units with p1 <= p0.
  double frac_p1_le_p0() const;
};

struct FoldPlan {
  int K = 0;
  /// Fold id in 1..K per dataset row.
  std::vector<int> assignment;
  std::string stratify_on = "(Z,D)";

  std::vector<std::size_t> validation_rows(int k) const;
  std::vector<std::size_t> training_rows(int k) const;
};

struct CrossFit {
  FoldPlan plan;
  /// One entry per fold, covering exactly that fold's validation rows.
  std::vector<NuisanceFit> folds;
  /// Per-fold training rows used for the fit.
  std::vector<std::vector<std::size_t>> training_rows;
  /// Fold fits assembled back into dataset row order (rows = 0..n-1).
  NuisanceFit combined;
};

NuisanceModels fit_nuisance_models(const Dataset& ds, const std::vector<std::size_t>& train_rows,
                                   const NuisanceSpecs& specs, const NuisanceOptions& opt);
NuisanceFit evaluate_nuisances(const NuisanceModels& models, const Dataset& ds,
                               const std::vector<std::size_t>& eval_rows, const NuisanceOptions& opt);

/// Fits on all rows and evaluates on all rows (the full-sample parametric path).
NuisanceFit fit_nuisances(const Dataset& ds, const NuisanceSpecs& specs, const NuisanceOptions& opt);

/// Stratified (Z, D) K-fold plan. Throws SparseCell when some cell has fewer than K members.
FoldPlan make_folds(const Dataset& ds, int K, std::uint64_t seed);

CrossFit crossfit_nuisances(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs,
                            const NuisanceOptions& opt);

}  // namespace prinstrat
