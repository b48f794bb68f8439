#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "prinstrat/error.hpp"
#include "prinstrat/strata.hpp"

using namespace prinstrat;
using Catch::Approx;

namespace {

// e11 by bisection on the odds-ratio equation over the Fréchet box.
double e11_by_search(double p0, double p1, double theta) {
  double lo = std::max(0.0, p0 + p1 - 1.0);
  double hi = std::min(p0, p1);
  auto f = [&](double e) {
    const double e10 = p0 - e;
    const double e01 = p1 - e;
    const double e00 = 1.0 - p0 - p1 + e;
    return e * e00 - theta * e10 * e01;
  };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double fd_cell(const MarginPair& m, const ThetaValue& t, Stratum s, int z, double h) {
  MarginPair up = m;
  MarginPair dn = m;
  (z == 0 ? up.p0 : up.p1) += h;
  (z == 0 ? dn.p0 : dn.p1) -= h;
  return (cell_probs(up, t).cell(s) - cell_probs(dn, t).cell(s)) / (2.0 * h);
}

}  // namespace

TEST_CASE("compute_delta matches the closed form and the search oracle", "[strata]") {
  CHECK(compute_delta({0.4, 0.6}, 2.0) == Approx(2.08).epsilon(1e-14));
  const double direct = std::pow(1.0 + 1.0 * (0.4 + 0.6), 2) - 4.0 * 2.0 * 1.0 * 0.4 * 0.6;
  CHECK(compute_delta({0.4, 0.6}, 2.0) == Approx(direct).epsilon(1e-14));
  CHECK(compute_delta({0.7, 0.8}, 1e-12) == Approx(0.25).margin(1e-10));
  CHECK(compute_delta({0.5, 0.5}, 1.0 + 1e-9) == Approx(1.0).margin(1e-8));

  const auto c = cell_probs({0.4, 0.6}, ThetaValue::finite(2.0));
  const double root = (1.0 + (0.4 + 0.6) - std::sqrt(2.08)) / 2.0;
  CHECK(c.e11 == Approx(root).margin(1e-14));
  CHECK(c.e11 == Approx(e11_by_search(0.4, 0.6, 2.0)).margin(1e-12));
}

TEST_CASE("compute_delta errors", "[strata]") {
  CHECK_THROWS_MATCHES(compute_delta({0.0, 0.5}, 2.0), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::DegenerateMargin;
                       }));
  CHECK_THROWS_MATCHES(compute_delta({0.3, 0.5}, 1.0), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::ThetaOne;
                       }));
  CHECK_THROWS_AS(compute_delta({0.3, 0.5}, -1.0), Error);
}

TEST_CASE("cell_probs examples", "[strata]") {
  const auto c = cell_probs({0.4, 0.6}, ThetaValue::finite(2.0));
  CHECK(c.e11 == Approx(0.278890).margin(1e-6));
  CHECK(c.e01 == Approx(0.321110).margin(1e-6));
  CHECK(c.e10 == Approx(0.121110).margin(1e-6));
  CHECK(c.e00 == Approx(0.278890).margin(1e-6));
  CHECK(c.e11 * c.e00 / (c.e10 * c.e01) == Approx(2.0).epsilon(1e-10));

  CHECK(cell_probs({0.4, 0.6}, SensitivitySpec::independence()).e11 == 0.4 * 0.6);

  const auto mono = cell_probs({0.4, 0.6}, SensitivitySpec::monotone(true));
  CHECK(mono.e11 == 0.4);
  CHECK(mono.e10 == 0.0);

  const auto tiny = cell_probs({0.7, 0.8}, ThetaValue::finite(1e-12));
  CHECK(tiny.e11 == Approx(0.5).margin(1e-9));
  CHECK(tiny.e00 == Approx(0.0).margin(1e-9));
  CHECK(tiny.e11 * tiny.e00 == Approx(0.0).margin(1e-9));

  CHECK_THROWS_AS(cell_probs({1.0, 0.5}, ThetaValue::finite(2.0)), Error);
  CHECK_THROWS_AS(SensitivitySpec::constant(0.0), Error);
  CHECK_THROWS_AS(SensitivitySpec::per_unit({1.0, -2.0}), Error);
  CHECK_THROWS_AS(SensitivitySpec::monotone(false), Error);
}

TEST_CASE("boundary margins accepted only in allow_boundary mode", "[strata]") {
  AlgebraOptions opt;
  opt.allow_boundary = true;
  const auto c = cell_probs({0.0, 0.6}, ThetaValue::finite(3.0), opt);
  CHECK(c.e11 == 0.0);
  CHECK(c.e01 == Approx(0.6));
  CHECK_THROWS_AS(cell_probs({0.0, 0.6}, ThetaValue::finite(3.0)), Error);
}

TEST_CASE("StrataProbs invariants on random tuples", "[strata][property]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> up(0.01, 0.99);
  std::uniform_real_distribution<double> ul(std::log(1e-6), std::log(1e6));
  for (int i = 0; i < 20000; ++i) {
    const MarginPair m{up(rng), up(rng)};
    const double theta = std::exp(ul(rng));
    const auto c = cell_probs(m, ThetaValue::finite(theta));
    REQUIRE(c.e00 + c.e01 + c.e10 + c.e11 == Approx(1.0).margin(1e-12));
    REQUIRE(c.e01 + c.e11 == Approx(m.p1).margin(1e-12));
    REQUIRE(c.e10 + c.e11 == Approx(m.p0).margin(1e-12));
    REQUIRE(c.e11 >= std::max(0.0, m.p0 + m.p1 - 1.0) - 1e-15);
    REQUIRE(c.e11 <= std::min(m.p0, m.p1) + 1e-15);
    if (c.e00 > 0 && c.e01 > 0 && c.e10 > 0 && c.e11 > 0) {
      REQUIRE(c.e11 * c.e00 / (c.e10 * c.e01) == Approx(theta).epsilon(1e-8));
    }
  }
}

TEST_CASE("e11 strictly increasing in theta", "[strata][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> up(0.05, 0.95);
  for (int i = 0; i < 50; ++i) {
    const MarginPair m{up(rng), up(rng)};
    double prev = -1.0;
    for (int k = 0; k < 100; ++k) {
      const double theta = std::exp(-5.0 + 10.0 * k / 99.0);
      const double e = cell_probs(m, ThetaValue::finite(theta)).e11;
      REQUIRE(e > prev);
      prev = e;
    }
  }
}

TEST_CASE("removable discontinuity at theta = 1", "[strata]") {
  for (double p0 : {0.1, 0.4, 0.77}) {
    for (double p1 : {0.2, 0.5, 0.93}) {
      for (double t : {1.0 - 1e-6, 1.0 + 1e-6, 1.0 + 1e-10}) {
        CHECK(std::abs(cell_probs({p0, p1}, ThetaValue::finite(t)).e11 - p0 * p1) < 1e-5);
      }
    }
  }
}

TEST_CASE("d_e11_dp examples", "[strata]") {
  CHECK(d_e11_dp({0.4, 0.6}, 2.0, 0) == Approx(0.63868).margin(1e-5));
  CHECK(d_e11_dp({0.4, 0.6}, 2.0, 0) == Approx(fd_cell({0.4, 0.6}, ThetaValue::finite(2.0), {1, 1}, 0, 1e-6)).margin(1e-6));
  CHECK(d_e11_dp({0.4, 0.6}, ThetaValue::independence(), 0) == 0.6);
  CHECK(d_e11_dp({0.5, 0.5}, 2.0, 0) == Approx(d_e11_dp({0.5, 0.5}, 2.0, 1)).epsilon(1e-15));
  CHECK(d_e11_dp({0.4, 0.6}, ThetaValue::monotone(), 0) == 1.0);
  CHECK(d_e11_dp({0.4, 0.6}, ThetaValue::monotone(), 1) == 0.0);
  CHECK(d_e11_dp({0.5, 0.5}, ThetaValue::monotone(), 1) == 0.5);
}

TEST_CASE("d_e11_dp raises DeltaUnderflow near a degenerate delta", "[strata]") {
  CHECK_THROWS_MATCHES(d_e11_dp({0.3, 0.7}, 1e-15, 0), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::DeltaUnderflow;
                       }));
}

TEST_CASE("cell_partials", "[strata]") {
  const MarginPair m{0.4, 0.6};
  const auto t = ThetaValue::finite(2.0);
  const auto p01 = cell_partials(m, t, {0, 1});
  CHECK(p01.first == Approx(-0.63868).margin(1e-5));
  CHECK(p01.second == Approx(1.0 - d_e11_dp(m, t, 1)).epsilon(1e-14));

  const auto ind = cell_partials({0.3, 0.8}, ThetaValue::independence(), {1, 0});
  CHECK(ind.first == Approx(1.0 - 0.8));
  CHECK(ind.second == Approx(-0.3));

  double sum0 = 0.0;
  double sum1 = 0.0;
  for (auto s : Stratum::all()) {
    sum0 += cell_partials(m, t, s).first;
    sum1 += cell_partials(m, t, s).second;
  }
  CHECK(sum0 == Approx(0.0).margin(1e-14));
  CHECK(sum1 == Approx(0.0).margin(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> up(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    const MarginPair r{up(rng), up(rng)};
    for (double th : {0.3, 2.0, 7.0}) {
      for (auto s : Stratum::all()) {
        const auto g = cell_partials(r, ThetaValue::finite(th), s);
        REQUIRE(g.first == Approx(fd_cell(r, ThetaValue::finite(th), s, 0, 1e-5)).margin(1e-6));
        REQUIRE(g.second == Approx(fd_cell(r, ThetaValue::finite(th), s, 1, 1e-5)).margin(1e-6));
      }
    }
  }
}

TEST_CASE("Stratum labels and spec summaries", "[strata]") {
  for (auto s : Stratum::all()) CHECK(Stratum::parse(s.label()) == s);
  CHECK_THROWS_AS(Stratum::parse("12"), Error);
  CHECK(SensitivitySpec::constant(2.0).summary() == "constant:2");
  CHECK(SensitivitySpec::constant(INFINITY).summary() == "constant:inf");
  CHECK(SensitivitySpec::monotone(true).summary() == "monotone");
  const auto pu = SensitivitySpec::per_unit({1.0, 2.0, 3.0});
  CHECK(pu.at(1).value == 2.0);
  CHECK(pu.subset({2, 0}).values() == std::vector<double>{3.0, 1.0});
}
