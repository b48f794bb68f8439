#include <random>

#include <benchmark/benchmark.h>

#include "prinstrat/estimators.hpp"
#include "prinstrat/learners.hpp"
#include "prinstrat/nuisance.hpp"
#include "prinstrat/simulation.hpp"
#include "prinstrat/strata.hpp"

using namespace prinstrat;

namespace {

SimData data(std::size_t n) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.seed = 1;
  return gen_dataset(cfg);
}

void BM_CellProbs(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<MarginPair> m(1024);
  for (auto& p : m) p = {u(rng), u(rng)};
  const auto theta = ThetaValue::finite(2.5);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cell_probs(m[i++ & 1023], theta));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CellProbs);

void BM_CellPartials(benchmark::State& state) {
  const MarginPair m{0.3, 0.6};
  const auto theta = ThetaValue::finite(2.5);
  for (auto _ : state) benchmark::DoNotOptimize(cell_partials(m, theta, {0, 1}));
}
BENCHMARK(BM_CellPartials);

void BM_Logistic(benchmark::State& state) {
  const SimData d = data(static_cast<std::size_t>(state.range(0)));
  Eigen::VectorXd z(static_cast<Eigen::Index>(d.ds.n()));
  for (std::size_t i = 0; i < d.ds.n(); ++i) z[static_cast<Eigen::Index>(i)] = d.ds.z[i];
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(d.ds.x, z));
}
BENCHMARK(BM_Logistic)->Arg(500)->Arg(5000);

void BM_Gbt(benchmark::State& state) {
  const SimData d = data(static_cast<std::size_t>(state.range(0)));
  GbtParams p;
  for (auto _ : state) benchmark::DoNotOptimize(fit_gbt(d.ds.x, d.ds.y, Target::Mean, p));
}
BENCHMARK(BM_Gbt)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_CdrReplicate(benchmark::State& state) {
  const SimData d = data(500);
  EstimateOptions eo;
  for (auto _ : state) {
    const NuisanceFit fit = fit_nuisances(d.ds, NuisanceSpecs{}, {});
    benchmark::DoNotOptimize(mu_cdr(d.ds, fit, SensitivitySpec::constant(0.5), {1, 1}, eo));
  }
}
BENCHMARK(BM_CdrReplicate)->Unit(benchmark::kMillisecond);

void BM_DmlReplicate(benchmark::State& state) {
  const SimData d = data(500);
  const NuisanceSpecs ml = NuisanceSpecs::uniform(LearnerSpec::stacked({LearnerSpec::glm(), LearnerSpec::gbt()}));
  EstimateOptions eo;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mu_dml(d.ds, make_folds(d.ds, 5, 3), ml, SensitivitySpec::constant(0.5), {1, 1}, eo));
  }
}
BENCHMARK(BM_DmlReplicate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
