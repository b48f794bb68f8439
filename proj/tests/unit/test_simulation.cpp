#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "prinstrat/error.hpp"
#include "prinstrat/simulation.hpp"

using namespace prinstrat;
using Catch::Approx;

TEST_CASE("transform_covariates", "[simulation]") {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 3);
  const Eigen::MatrixXd t = transform_covariates(zero);
  CHECK(t(0, 0) == Approx(1.0));
  CHECK(t(0, 1) == Approx(10.0));
  CHECK(t(0, 2) == Approx(0.216));

  DgpConfig cfg;
  cfg.n = 1000;
  cfg.seed = 3;
  const Eigen::MatrixXd x = gen_dataset(cfg).ds.x;
  const Eigen::MatrixXd back = inverse_transform_covariates(transform_covariates(x));
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("DgpConfig validation", "[simulation]") {
  DgpConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.p_slope = {3.0, 3.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  DgpConfig inf;
  inf.mode = ThetaTrueMode::Infinity;
  inf.inf_intercept = {1.0, -1.0};
  CHECK_THROWS_AS(inf.validate(), Error);
}

TEST_CASE("sampled strata frequencies match cell probabilities", "[simulation][slow]") {
  DgpConfig cfg;
  cfg.n = 1'000'000;
  cfg.theta = 0.5;
  cfg.seed = 99;
  const SimData data = gen_dataset(cfg);
  std::array<double, 4> freq{};
  std::array<double, 4> expected{};
  const auto strata = Stratum::all();
  const Eigen::VectorXd s = data.ds.x.rowwise().sum();
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const auto c = cell_probs({cfg.p_at(0, s[static_cast<Eigen::Index>(i)]), cfg.p_at(1, s[static_cast<Eigen::Index>(i)])},
                              ThetaValue::finite(cfg.theta));
    for (std::size_t k = 0; k < 4; ++k) {
      expected[k] += c.cell(strata[k]);
      if (data.d0[i] == strata[k].d0 && data.d1[i] == strata[k].d1) freq[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(freq[k] - expected[k]) / static_cast<double>(cfg.n) < 1.5e-3);
  }
}

TEST_CASE("independent potential intermediates at theta = 1", "[simulation][slow]") {
  DgpConfig cfg;
  cfg.n = 1'000'000;
  cfg.theta = 1.0;
  cfg.seed = 5;
  const SimData data = gen_dataset(cfg);
  const Eigen::VectorXd s = data.ds.x.rowwise().sum();
  // Pearson χ² for the (D(0), D(1)) table within 20 bins of width 0.25 on s ∈ [-2.5, 2.5).
  const int bins = 20;
  std::vector<std::array<double, 4>> t(bins, {0, 0, 0, 0});
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double si = s[static_cast<Eigen::Index>(i)];
    if (si < -2.5 || si >= 2.5) continue;
    const auto b = static_cast<std::size_t>((si + 2.5) / 0.25);
    t[b][static_cast<std::size_t>(2 * data.d0[i] + data.d1[i])] += 1.0;
  }
  double chi2 = 0.0;
  for (const auto& c : t) {
    const double n = c[0] + c[1] + c[2] + c[3];
    const double r[2] = {c[0] + c[1], c[2] + c[3]};
    const double k[2] = {c[0] + c[2], c[1] + c[3]};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double e = r[a] * k[b] / n;
        chi2 += (c[static_cast<std::size_t>(2 * a + b)] - e) * (c[static_cast<std::size_t>(2 * a + b)] - e) / e;
      }
    }
  }
  // 0.999 quantile of χ² with 20 degrees of freedom.
  CHECK(chi2 < 45.315);
}

TEST_CASE("infinity mode never samples stratum 10", "[simulation]") {
  DgpConfig cfg;
  cfg.mode = ThetaTrueMode::Infinity;
  cfg.n = 200000;
  cfg.seed = 1;
  const SimData data = gen_dataset(cfg);
  for (std::size_t i = 0; i < cfg.n; ++i) REQUIRE_FALSE((data.d0[i] == 1 && data.d1[i] == 0));
}

TEST_CASE("super-population truth agrees with a sampled super-population", "[simulation][slow]") {
  DgpConfig cfg;
  cfg.theta = 2.0;
  cfg.n = 2'000'000;
  cfg.seed = 17;
  const SuperpopTruth t = superpopulation_truth(cfg, 2'000'000);
  const SimData data = gen_dataset(cfg);
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (data.d0[i] == 1 && data.d1[i] == 1) {
      sum += data.y1[static_cast<Eigen::Index>(i)] - data.y0[static_cast<Eigen::Index>(i)];
      count += 1.0;
    }
  }
  CHECK(sum / count == Approx(t.mu_of({1, 1})).margin(5e-3));
  CHECK(count / static_cast<double>(cfg.n) == Approx(t.proportion_of({1, 1})).margin(2e-3));

  const SuperpopTruth again = superpopulation_truth(cfg, 2'000'000);
  CHECK(again.mu == t.mu);
}

TEST_CASE("principal ignorability holds by construction", "[simulation][slow]") {
  DgpConfig cfg;
  cfg.theta = 3.0;
  cfg.n = 1'000'000;
  cfg.seed = 23;
  const SimData data = gen_dataset(cfg);
  const Eigen::VectorXd s = data.ds.x.rowwise().sum();
  // Within D(1) = 1 and a narrow s bin, Y(1) has the same mean for strata 11 and 01.
  double a = 0.0;
  double na = 0.0;
  double b = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double si = s[static_cast<Eigen::Index>(i)];
    if (si < 0.0 || si >= 0.1 || data.d1[i] != 1) continue;
    const double r = data.y1[static_cast<Eigen::Index>(i)] - cfg.m_at(1, 1, si);
    if (data.d0[i] == 1) {
      a += r;
      na += 1.0;
    } else {
      b += r;
      nb += 1.0;
    }
  }
  const double se = cfg.noise_sd * std::sqrt(1.0 / na + 1.0 / nb);
  CHECK(std::abs(a / na - b / nb) < 4.0 * se);
}

TEST_CASE("run_scenario is reproducible and summarize is ordered", "[simulation]") {
  SimScenario sc;
  sc.reps = 25;
  sc.dgp.theta = 2.0;
  sc.fitted = FittedTheta::constant(2.0);
  sc.strata = {{1, 1}, {0, 1}};
  sc.estimators = {EstimatorKind::WT, EstimatorKind::CDR};
  sc.superpop_units = 200000;
  const SimMetrics a = run_scenario(sc);
  const SimMetrics b = run_scenario(sc);
  REQUIRE(a.rows.size() == 4);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].estimates == b.rows[i].estimates);
    CHECK(a.rows[i].ses == b.rows[i].ses);
  }
  CHECK(summarize({a}).to_csv() == summarize({b}).to_csv());

  sc.threads = 3;
  const SimMetrics c = run_scenario(sc);
  CHECK(summarize({c}).to_csv() == summarize({a}).to_csv());

  const Table empty = summarize({});
  CHECK(empty.rows.empty());
  CHECK_FALSE(empty.columns.empty());

  SimScenario other = sc;
  other.dgp.theta = 0.5;
  other.fitted = FittedTheta::constant(0.5);
  other.design_spec = 'b';
  const Table merged = summarize({a, run_scenario(other)});
  REQUIRE(merged.rows.size() == 8);
  CHECK(merged.text(0, "theta_true") == "0.5");
  CHECK(merged.text(7, "theta_true") == "2");
  for (std::size_t r = 0; r < merged.rows.size(); ++r) {
    CHECK(merged.number(r, "cp") >= 0.0);
    CHECK(merged.number(r, "cp") <= 1.0);
  }
}

TEST_CASE("unknown design specification is rejected before computing", "[simulation]") {
  SimScenario sc;
  sc.design_spec = 'f';
  CHECK_THROWS_MATCHES(run_scenario(sc), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::ConfigError; }));
}
