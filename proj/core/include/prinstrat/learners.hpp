#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prinstrat/dataset.hpp"

namespace prinstrat {

/// A fitted predictor. Immutable once constructed, so it may be shared across threads.
class Model {
 public:
  virtual ~Model() = default;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
  virtual std::string describe() const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Wraps an arbitrary function of the design matrix (used for known nuisance functions).
ModelPtr make_function_model(std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> f,
                             std::string description);
ModelPtr make_constant_model(double value);

enum class Target { Probability, Mean };

struct LogisticOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double divergence_bound = 30.0;
  double ridge_lambda = 1e-4;
};

struct LogisticFit {
  /// Intercept first, then one slope per design column, on the original scale.
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
  /// True if the unpenalized fit diverged and the ridge refit was used.
  bool ridge_fallback = false;
  ModelPtr model;
};

/// Binomial maximum likelihood by IRLS on the standardized design.
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                         const LogisticOptions& opt = {});

struct OlsFit {
  Eigen::VectorXd coef;
  ModelPtr model;
};

OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

struct GbtParams {
  int trees = 300;
  int depth = 2;
  double shrinkage = 0.1;
  int min_leaf = 10;
  double subsample = 0.8;
  double l2 = 1e-6;
  double clip = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gradient boosted regression trees; log-loss for Probability targets, squared loss otherwise.
ModelPtr fit_gbt(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Target target,
                 const GbtParams& params);

enum class LearnerKind { LogisticIRLS, LinearOLS, Glm, GradientBoostedTrees, Stacked, Fixed };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::Glm;
  DesignKind design = DesignKind::Raw;
  GbtParams gbt_params;
  std::vector<LearnerSpec> members;
  int validation_folds = 5;
  ModelPtr fixed;

  static LearnerSpec logistic(DesignKind d = DesignKind::Raw);
  static LearnerSpec ols(DesignKind d = DesignKind::Raw);
  static LearnerSpec glm(DesignKind d = DesignKind::Raw);
  static LearnerSpec gbt(DesignKind d = DesignKind::Raw, GbtParams p = {});
  static LearnerSpec stacked(std::vector<LearnerSpec> members, DesignKind d = DesignKind::Raw,
                             int folds = 5);
  static LearnerSpec fixed_model(ModelPtr m, DesignKind d = DesignKind::Raw);
  /// Parses "glm", "logistic", "ols", "gbt", "stacked" (= stacked glm + gbt).
  static LearnerSpec parse(const std::string& name, DesignKind d = DesignKind::Raw);

  void validate() const;
  std::string name() const;
};

struct FittedLearner {
  ModelPtr model;
  std::vector<double> weights;
  std::vector<std::string> notes;
};

struct StackedFit {
  ModelPtr model;
  std::vector<double> weights;
  std::vector<std::string> members;
  std::vector<std::string> dropped;
};

/// Convex combination of members, weights chosen by V-fold cross-validated loss.
StackedFit fit_stacked(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Target target,
                       const std::vector<LearnerSpec>& members, int folds, std::uint64_t seed);

/// Dispatch on spec.kind. `design` must already be the matrix selected by spec.design.
FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& design,
                          const Eigen::VectorXd& response, Target target, std::uint64_t seed);

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

}  // namespace prinstrat
