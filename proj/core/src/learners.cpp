#include "prinstrat/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "prinstrat/error.hpp"
#include "prinstrat/random.hpp"

namespace prinstrat {

namespace {

double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

class FunctionModel final : public Model {
 public:
  FunctionModel(std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> f, std::string d)
      : f_(std::move(f)), desc_(std::move(d)) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override { return f_(x); }
  std::string describe() const override { return desc_; }

 private:
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> f_;
  std::string desc_;
};

class LinearIndexModel final : public Model {
 public:
  LinearIndexModel(Eigen::VectorXd coef, bool logistic, std::string d)
      : coef_(std::move(coef)), logistic_(logistic), desc_(std::move(d)) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    if (x.cols() + 1 != coef_.size()) {
      throw Error(ErrorCode::SchemaError, "design has " + std::to_string(x.cols()) +
                                              " columns; model expects " + std::to_string(coef_.size() - 1));
    }
    Eigen::VectorXd eta = (x * coef_.tail(coef_.size() - 1)).array() + coef_[0];
    if (!logistic_) return eta;
    return eta.unaryExpr([](double t) { return expit(t); });
  }
  std::string describe() const override { return desc_; }

 private:
  Eigen::VectorXd coef_;
  bool logistic_;
  std::string desc_;
};

class StackedModel final : public Model {
 public:
  StackedModel(std::vector<ModelPtr> members, std::vector<double> weights, std::string d)
      : members_(std::move(members)), weights_(std::move(weights)), desc_(std::move(d)) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
    for (std::size_t m = 0; m < members_.size(); ++m) {
      if (weights_[m] == 0.0) continue;
      out += weights_[m] * members_[m]->predict(x);
    }
    return out;
  }
  std::string describe() const override { return desc_; }

 private:
  std::vector<ModelPtr> members_;
  std::vector<double> weights_;
  std::string desc_;
};

void check_shapes(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  if (design.rows() != response.size()) {
    throw Error(ErrorCode::SchemaError, "design and response lengths differ");
  }
  if (!design.allFinite() || !response.allFinite()) {
    throw Error(ErrorCode::DomainError, "non-finite values in design or response");
  }
}

std::string coef_string(const Eigen::VectorXd& c) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (Eigen::Index i = 0; i < c.size(); ++i) os << (i ? ", " : "") << c[i];
  os << "]";
  return os.str();
}

struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

Standardized standardize_with_intercept(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Standardized s;
  s.mean = x.colwise().mean().transpose();
  s.sd.resize(p);
  s.z.resize(n, p + 1);
  s.z.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt((x.col(j).array() - s.mean[j]).square().mean());
    if (!(sd > 1e-12 * (1.0 + std::abs(s.mean[j])))) {
      throw Error(ErrorCode::RankDeficient, "design column " + std::to_string(j) + " is constant");
    }
    s.sd[j] = sd;
    s.z.col(j + 1) = (x.col(j).array() - s.mean[j]) / sd;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.z);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) throw Error(ErrorCode::RankDeficient, "design is not of full column rank");
  return s;
}

struct IrlsResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

IrlsResult irls(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda, const LogisticOptions& opt) {
  const Eigen::Index n = z.rows();
  const Eigen::Index k = z.cols();
  IrlsResult r;
  r.beta = Eigen::VectorXd::Zero(k);
  const double ybar = y.mean();
  r.beta[0] = std::log(ybar / (1.0 - ybar));
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k, lambda);
  penalty[0] = 0.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    Eigen::VectorXd mu = (z * r.beta).unaryExpr([](double t) { return expit(t); });
    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-12);
    Eigen::VectorXd grad = z.transpose() * (y - mu) / static_cast<double>(n);
    grad.array() -= penalty.array() * r.beta.array();
    Eigen::MatrixXd h = z.transpose() * w.asDiagonal() * z / static_cast<double>(n);
    h.diagonal() += penalty;
    Eigen::VectorXd step = h.ldlt().solve(grad);
    if (!step.allFinite()) {
      r.diverged = true;
      break;
    }
    r.beta += step;
    r.iterations = it + 1;
    if (r.beta.cwiseAbs().maxCoeff() > opt.divergence_bound) {
      r.diverged = true;
      break;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

std::vector<std::vector<std::size_t>> random_folds(std::size_t n, int v, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(v));
  for (std::size_t i = 0; i < n; ++i) folds[i % static_cast<std::size_t>(v)].push_back(perm[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

double log_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double q = std::clamp(p[i], 1e-9, 1.0 - 1e-9);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return s / static_cast<double>(y.size());
}

Eigen::VectorXd simplex_weights_squared(const Eigen::MatrixXd& p, const Eigen::VectorXd& y) {
  const Eigen::Index m = p.cols();
  const double n = static_cast<double>(p.rows());
  const Eigen::MatrixXd g = p.transpose() * p / n;
  const Eigen::VectorXd b = p.transpose() * y / n;
  const double lip = 2.0 * std::max(g.eigenvalues().real().maxCoeff(), 1e-12);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd grad = 2.0 * (g * w - b);
    const Eigen::VectorXd next = project_simplex(w - grad / lip);
    const double change = (next - w).cwiseAbs().maxCoeff();
    w = next;
    if (change < 1e-13) break;
  }
  return w;
}

Eigen::VectorXd simplex_weights_logloss(const Eigen::MatrixXd& praw, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd p = praw.array().max(1e-6).min(1.0 - 1e-6).matrix();
  const Eigen::Index m = p.cols();
  const double n = static_cast<double>(p.rows());
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  auto loss = [&](const Eigen::VectorXd& ww) { return log_loss(y, p * ww); };
  double f = loss(w);
  double step = 1.0;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd q = p * w;
    Eigen::VectorXd r(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) r[i] = -(y[i] / q[i]) + (1.0 - y[i]) / (1.0 - q[i]);
    const Eigen::VectorXd grad = p.transpose() * r / n;
    Eigen::VectorXd next;
    double fn = f;
    step *= 2.0;
    for (int bt = 0; bt < 60; ++bt) {
      next = project_simplex(w - step * grad);
      fn = loss(next);
      if (fn <= f - 1e-4 * grad.dot(w - next)) break;
      step *= 0.5;
    }
    const double change = (next - w).cwiseAbs().maxCoeff();
    if (fn > f) break;
    w = next;
    f = fn;
    if (change < 1e-12) break;
  }
  return w;
}

}  // namespace

ModelPtr make_function_model(std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> f, std::string description) {
  return std::make_shared<FunctionModel>(std::move(f), std::move(description));
}

ModelPtr make_constant_model(double value) {
  return make_function_model([value](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), value); },
                             "constant(" + std::to_string(value) + ")");
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    cum += u[static_cast<std::size_t>(j)];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  return (v.array() - tau).max(0.0);
}

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, const LogisticOptions& opt) {
  check_shapes(design, response);
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    if (response[i] != 0.0 && response[i] != 1.0) {
      throw Error(ErrorCode::DomainError, "logistic response must be 0/1");
    }
  }
  const double ybar = response.size() ? response.mean() : 0.0;
  if (response.size() == 0 || ybar == 0.0 || ybar == 1.0) {
    throw Error(ErrorCode::SeparationDetected, "logistic response is constant");
  }
  if (design.rows() <= design.cols()) {
    throw Error(ErrorCode::RankDeficient, "fewer rows than coefficients");
  }
  const Standardized s = standardize_with_intercept(design);

  LogisticFit fit;
  IrlsResult r = irls(s.z, response, 0.0, opt);
  if (r.diverged || !r.converged) {
    r = irls(s.z, response, opt.ridge_lambda, opt);
    fit.ridge_fallback = true;
    if (r.diverged) throw Error(ErrorCode::SeparationDetected, "ridge-stabilized refit also diverged");
  }
  fit.iterations = r.iterations;
  fit.converged = r.converged;

  const Eigen::Index p = design.cols();
  fit.coef.resize(p + 1);
  fit.coef[0] = r.beta[0];
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coef[j + 1] = r.beta[j + 1] / s.sd[j];
    fit.coef[0] -= r.beta[j + 1] * s.mean[j] / s.sd[j];
  }
  fit.model = std::make_shared<LinearIndexModel>(
      fit.coef, true, std::string("logistic") + (fit.ridge_fallback ? "(ridge)" : "") + coef_string(fit.coef));
  return fit;
}

OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  check_shapes(design, response);
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (n <= p) throw Error(ErrorCode::RankDeficient, "fewer rows than coefficients");
  Eigen::MatrixXd a(n, p + 1);
  a.col(0).setOnes();
  a.rightCols(p) = design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) throw Error(ErrorCode::RankDeficient, "design is not of full column rank");
  OlsFit fit;
  fit.coef = qr.solve(response);
  fit.model = std::make_shared<LinearIndexModel>(fit.coef, false, "ols" + coef_string(fit.coef));
  return fit;
}

StackedFit fit_stacked(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Target target,
                       const std::vector<LearnerSpec>& members, int folds, std::uint64_t seed) {
  check_shapes(design, response);
  if (members.empty()) throw Error(ErrorCode::ConfigError, "stacked learner needs members");
  const auto n = static_cast<std::size_t>(design.rows());
  const int v = std::max(2, std::min<int>(folds, static_cast<int>(n)));
  const auto plan = random_folds(n, v, derive_seed(seed, {0xF01D}));

  StackedFit out;
  std::vector<std::size_t> ok;
  std::vector<Eigen::VectorXd> oof;
  for (std::size_t m = 0; m < members.size(); ++m) {
    Eigen::VectorXd pred(static_cast<Eigen::Index>(n));
    try {
      for (int k = 0; k < v; ++k) {
        const auto& hold = plan[static_cast<std::size_t>(k)];
        std::vector<std::size_t> train;
        train.reserve(n - hold.size());
        for (int j = 0; j < v; ++j) {
          if (j != k) train.insert(train.end(), plan[static_cast<std::size_t>(j)].begin(), plan[static_cast<std::size_t>(j)].end());
        }
        auto f = fit_learner(members[m], take_rows(design, train), take_rows(response, train), target,
                             derive_seed(seed, {m, static_cast<std::uint64_t>(k)}));
        const Eigen::VectorXd ph = f.model->predict(take_rows(design, hold));
        for (std::size_t i = 0; i < hold.size(); ++i) pred[static_cast<Eigen::Index>(hold[i])] = ph[static_cast<Eigen::Index>(i)];
      }
      ok.push_back(m);
      oof.push_back(std::move(pred));
    } catch (const Error& e) {
      out.dropped.push_back(members[m].name() + ": " + e.what());
    }
  }
  if (ok.empty()) throw Error(ErrorCode::StackedFitFailed, "every stacked member failed");

  Eigen::VectorXd w;
  if (ok.size() == 1) {
    w = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ok.size()));
    for (std::size_t j = 0; j < ok.size(); ++j) p.col(static_cast<Eigen::Index>(j)) = oof[j];
    w = target == Target::Probability ? simplex_weights_logloss(p, response) : simplex_weights_squared(p, response);
  }

  std::vector<ModelPtr> models;
  std::vector<double> weights;
  std::ostringstream desc;
  desc << "stacked{";
  for (std::size_t j = 0; j < ok.size(); ++j) {
    const auto m = ok[j];
    try {
      auto f = fit_learner(members[m], design, response, target, derive_seed(seed, {m, 0xFFFFu}));
      models.push_back(f.model);
      weights.push_back(w[static_cast<Eigen::Index>(j)]);
      out.members.push_back(members[m].name());
    } catch (const Error& e) {
      out.dropped.push_back(members[m].name() + " (refit): " + e.what());
    }
  }
  if (models.empty()) throw Error(ErrorCode::StackedFitFailed, "every stacked member failed on refit");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (auto& x : weights) x = total > 0.0 ? x / total : 1.0 / static_cast<double>(weights.size());
  for (std::size_t j = 0; j < models.size(); ++j) desc << (j ? ", " : "") << out.members[j] << ":" << weights[j];
  desc << "}";
  out.weights = weights;
  out.model = std::make_shared<StackedModel>(std::move(models), weights, desc.str());
  return out;
}

void GbtParams::validate() const {
  if (trees < 0 || depth < 1 || !(shrinkage > 0.0) || min_leaf < 1 || !(subsample > 0.0) || subsample > 1.0 ||
      l2 < 0.0 || !(clip >= 0.0 && clip < 0.5)) {
    throw Error(ErrorCode::ConfigError, "invalid gradient boosting hyperparameters");
  }
}

LearnerSpec LearnerSpec::logistic(DesignKind d) { return {LearnerKind::LogisticIRLS, d, {}, {}, 5, nullptr}; }
LearnerSpec LearnerSpec::ols(DesignKind d) { return {LearnerKind::LinearOLS, d, {}, {}, 5, nullptr}; }
LearnerSpec LearnerSpec::glm(DesignKind d) { return {LearnerKind::Glm, d, {}, {}, 5, nullptr}; }
LearnerSpec LearnerSpec::gbt(DesignKind d, GbtParams p) {
  return {LearnerKind::GradientBoostedTrees, d, p, {}, 5, nullptr};
}
LearnerSpec LearnerSpec::stacked(std::vector<LearnerSpec> members, DesignKind d, int folds) {
  for (auto& m : members) m.design = d;
  return {LearnerKind::Stacked, d, {}, std::move(members), folds, nullptr};
}
LearnerSpec LearnerSpec::fixed_model(ModelPtr m, DesignKind d) { return {LearnerKind::Fixed, d, {}, {}, 5, std::move(m)}; }

LearnerSpec LearnerSpec::parse(const std::string& name, DesignKind d) {
  if (name == "glm") return glm(d);
  if (name == "logistic") return logistic(d);
  if (name == "ols") return ols(d);
  if (name == "gbt") return gbt(d);
  if (name == "stacked") return stacked({glm(), gbt()}, d);
  throw Error(ErrorCode::ConfigError, "unknown learner '" + name + "' (glm, logistic, ols, gbt, stacked)");
}

void LearnerSpec::validate() const {
  switch (kind) {
    case LearnerKind::GradientBoostedTrees: gbt_params.validate(); break;
    case LearnerKind::Stacked:
      if (members.size() < 2) throw Error(ErrorCode::ConfigError, "stacked learner needs at least 2 members");
      if (validation_folds < 2) throw Error(ErrorCode::ConfigError, "stacked learner needs >= 2 folds");
      for (const auto& m : members) m.validate();
      break;
    case LearnerKind::Fixed:
      if (!fixed) throw Error(ErrorCode::ConfigError, "fixed learner has no model");
      break;
    default: break;
  }
}

std::string LearnerSpec::name() const {
  std::string base;
  switch (kind) {
    case LearnerKind::LogisticIRLS: base = "logistic"; break;
    case LearnerKind::LinearOLS: base = "ols"; break;
    case LearnerKind::Glm: base = "glm"; break;
    case LearnerKind::GradientBoostedTrees: base = "gbt"; break;
    case LearnerKind::Stacked: {
      base = "stacked(";
      for (std::size_t i = 0; i < members.size(); ++i) base += (i ? "+" : "") + members[i].name();
      base += ")";
      break;
    }
    case LearnerKind::Fixed: base = "fixed"; break;
  }
  return design == DesignKind::Transformed ? base + "[transformed]" : base;
}

FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          Target target, std::uint64_t seed) {
  FittedLearner out;
  switch (spec.kind) {
    case LearnerKind::LogisticIRLS: {
      if (target != Target::Probability) throw Error(ErrorCode::ConfigError, "logistic learner needs a binary target");
      auto f = fit_logistic(design, response);
      if (f.ridge_fallback) out.notes.push_back("SeparationDetected: ridge fallback used");
      out.model = f.model;
      return out;
    }
    case LearnerKind::LinearOLS: out.model = fit_ols(design, response).model; return out;
    case LearnerKind::Glm: {
      LearnerSpec s = spec;
      s.kind = target == Target::Probability ? LearnerKind::LogisticIRLS : LearnerKind::LinearOLS;
      return fit_learner(s, design, response, target, seed);
    }
    case LearnerKind::GradientBoostedTrees: {
      GbtParams p = spec.gbt_params;
      p.seed = seed;
      out.model = fit_gbt(design, response, target, p);
      return out;
    }
    case LearnerKind::Stacked: {
      spec.validate();
      auto f = fit_stacked(design, response, target, spec.members, spec.validation_folds, seed);
      out.model = f.model;
      out.weights = f.weights;
      for (auto& dmsg : f.dropped) out.notes.push_back("dropped member " + dmsg);
      return out;
    }
    case LearnerKind::Fixed:
      spec.validate();
      out.model = spec.fixed;
      return out;
  }
  throw Error(ErrorCode::ConfigError, "unknown learner kind");
}

}  // namespace prinstrat
