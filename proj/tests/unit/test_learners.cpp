#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "prinstrat/error.hpp"
#include "prinstrat/learners.hpp"

using namespace prinstrat;
using Catch::Approx;

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double log_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s -= y[i] * std::log(p[i]) + (1.0 - y[i]) * std::log(1.0 - p[i]);
  return s / static_cast<double>(y.size());
}

bool has_code(const Error& e, ErrorCode c) { return e.code() == c; }

}  // namespace

TEST_CASE("logistic recovers generating coefficients", "[learners]") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u;
  const int n = 10000;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    y[i] = u(rng) < expit(0.5 - 1.0 * x(i, 0)) ? 1.0 : 0.0;
  }
  const auto fit = fit_logistic(x, y);
  REQUIRE(fit.converged);
  CHECK_FALSE(fit.ridge_fallback);

  // Fisher information for 3-SE bands.
  Eigen::MatrixXd xd(n, 2);
  xd.col(0).setOnes();
  xd.col(1) = x.col(0);
  const Eigen::VectorXd p = fit.model->predict(x);
  const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
  const Eigen::MatrixXd info = xd.transpose() * w.asDiagonal() * xd;
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  CHECK(std::abs(fit.coef[0] - 0.5) < 3.0 * se[0]);
  CHECK(std::abs(fit.coef[1] + 1.0) < 3.0 * se[1]);

  const Eigen::VectorXd grad = xd.transpose() * (y - p);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logistic null model and degenerate responses", "[learners]") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nrm;
  const int n = 2000;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    x(i, 1) = nrm(rng);
    y[i] = i % 4 == 0 ? 1.0 : 0.0;
  }
  std::shuffle(y.data(), y.data() + n, rng);
  const auto fit = fit_logistic(x, y);
  CHECK(fit.coef[0] == Approx(std::log(0.25 / 0.75)).margin(0.15));
  CHECK(std::abs(fit.coef[1]) < 0.15);
  CHECK(std::abs(fit.coef[2]) < 0.15);

  CHECK_THROWS_MATCHES(fit_logistic(x, Eigen::VectorXd::Ones(n)), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return has_code(e, ErrorCode::SeparationDetected); }));
  Eigen::MatrixXd collinear(n, 2);
  collinear.col(0) = x.col(0);
  collinear.col(1) = 2.0 * x.col(0);
  CHECK_THROWS_MATCHES(fit_logistic(collinear, y), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return has_code(e, ErrorCode::RankDeficient); }));
}

TEST_CASE("separable data falls back to ridge", "[learners]") {
  const int n = 200;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i - 99.5;
    y[i] = x(i, 0) > 0 ? 1.0 : 0.0;
  }
  const auto fit = fit_logistic(x, y);
  CHECK(fit.ridge_fallback);
  const Eigen::VectorXd p = fit.model->predict(x);
  CHECK(p.allFinite());
  CHECK(p[0] < 0.05);
  CHECK(p[n - 1] > 0.95);
}

TEST_CASE("ols", "[learners]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nrm;
  const int n = 10000;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd exact(n);
  Eigen::VectorXd noisy(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    exact[i] = 2.0 * x(i, 0) + 3.0;
    noisy[i] = exact[i] + nrm(rng);
  }
  const auto a = fit_ols(x, exact);
  CHECK(a.coef[0] == Approx(3.0).margin(1e-10));
  CHECK(a.coef[1] == Approx(2.0).margin(1e-10));

  const auto b = fit_ols(x, noisy);
  const double se_slope = 1.0 / std::sqrt(n * 1.0);
  CHECK(std::abs(b.coef[1] - 2.0) < 3.0 * se_slope * 1.1);
  CHECK(std::abs(b.coef[0] - 3.0) < 3.0 * se_slope * 1.1);

  const auto c = fit_ols(x, Eigen::VectorXd::Constant(n, 4.2));
  CHECK(c.coef[1] == Approx(0.0).margin(1e-10));
  CHECK(c.coef[0] == Approx(4.2).margin(1e-10));

  Eigen::MatrixXd collinear(n, 2);
  collinear << x, -x;
  CHECK_THROWS_AS(fit_ols(collinear, noisy), Error);
}

TEST_CASE("gbt learns a step and is deterministic", "[learners][gbt]") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nrm;
  const int n = 5000;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    x(i, 1) = nrm(rng);
    y[i] = x(i, 0) > 0 ? 1.0 : 0.0;
  }
  GbtParams p;
  p.trees = 200;
  p.seed = 9;
  const auto m = fit_gbt(x, y, Target::Probability, p);
  const Eigen::VectorXd pr = m->predict(x);
  int wrong = 0;
  for (int i = 0; i < n; ++i) wrong += (pr[i] > 0.5) != (y[i] > 0.5);
  CHECK(wrong < 0.05 * n);
  CHECK(pr.minCoeff() >= p.clip);
  CHECK(pr.maxCoeff() <= 1.0 - p.clip);

  const auto again = fit_gbt(x, y, Target::Probability, p);
  CHECK((again->predict(x).array() == pr.array()).all());

  p.trees = 0;
  const auto c = fit_gbt(x, y, Target::Mean, p);
  CHECK(c->predict(x).maxCoeff() == Approx(y.mean()).epsilon(1e-14));
  CHECK(c->predict(x).minCoeff() == Approx(y.mean()).epsilon(1e-14));
}

TEST_CASE("gbt on pure noise is close to the constant predictor out of sample", "[learners][gbt]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u;
  const int n = 20000;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = nrm(rng);
    y[i] = u(rng) < 0.5 ? 1.0 : 0.0;
  }
  const int half = n / 2;
  GbtParams p;
  p.seed = 3;
  const auto m = fit_gbt(x.topRows(half), y.head(half), Target::Probability, p);
  const Eigen::VectorXd test_y = y.tail(half);
  const double gbt_loss = log_loss(test_y, m->predict(x.bottomRows(half)));
  const double const_loss = log_loss(test_y, Eigen::VectorXd::Constant(half, y.head(half).mean()));
  CHECK(gbt_loss <= 1.02 * const_loss);
}

TEST_CASE("stacking", "[learners][stacked]") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nrm;
  const int n = 1000;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    x(i, 1) = nrm(rng);
    y[i] = 1.0 + 2.0 * x(i, 0) - x(i, 1);
  }
  const auto fit = fit_stacked(x, y, Target::Mean, {LearnerSpec::ols(), LearnerSpec::gbt()}, 5, 1);
  REQUIRE(fit.weights.size() == 2);
  CHECK(fit.weights[0] >= 0.9);
  CHECK(fit.weights[0] + fit.weights[1] == Approx(1.0).margin(1e-12));
  CHECK(fit.weights[1] >= 0.0);

  const auto same = fit_stacked(x, y, Target::Mean, {LearnerSpec::ols(), LearnerSpec::ols()}, 5, 1);
  const Eigen::VectorXd a = same.model->predict(x);
  const Eigen::VectorXd b = fit_ols(x, y).model->predict(x);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("stacking with a failing member and all members failing", "[learners][stacked]") {
  const int n = 300;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nrm;
  for (int i = 0; i < n; ++i) {
    x(i, 0) = nrm(rng);
    x(i, 1) = x(i, 0);
    y[i] = x(i, 0) + nrm(rng);
  }
  const auto fit = fit_stacked(x, y, Target::Mean, {LearnerSpec::ols(), LearnerSpec::gbt()}, 5, 1);
  CHECK(fit.dropped.size() == 1);
  CHECK(fit.weights.size() == 1);
  CHECK(fit.weights[0] == 1.0);
  CHECK_THROWS_MATCHES(fit_stacked(x, y, Target::Mean, {LearnerSpec::ols(), LearnerSpec::ols()}, 5, 1), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return has_code(e, ErrorCode::StackedFitFailed); }));
}

TEST_CASE("simplex projection", "[learners]") {
  const Eigen::VectorXd p = project_simplex((Eigen::VectorXd(3) << 0.5, 2.0, -1.0).finished());
  CHECK(p.sum() == Approx(1.0));
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p[1] == Approx(1.0));
}

TEST_CASE("learner spec parsing", "[learners]") {
  CHECK(LearnerSpec::parse("stacked").members.size() == 2);
  CHECK(LearnerSpec::parse("gbt", DesignKind::Transformed).name() == "gbt[transformed]");
  CHECK_THROWS_AS(LearnerSpec::parse("forest"), Error);
  GbtParams bad;
  bad.trees = -1;
  CHECK_THROWS_AS(LearnerSpec::gbt(DesignKind::Raw, bad).validate(), Error);
  CHECK_THROWS_AS(LearnerSpec::stacked({LearnerSpec::ols()}).validate(), Error);
}
