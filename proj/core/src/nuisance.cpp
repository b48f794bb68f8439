#include "prinstrat/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "prinstrat/error.hpp"
#include "prinstrat/random.hpp"

namespace prinstrat {

namespace {

template <typename F>
auto with_context(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), what + ": " + e.what());
  }
}

std::vector<std::size_t> filter_rows(const Dataset& ds, const std::vector<std::size_t>& rows, int z, int d = -1) {
  std::vector<std::size_t> out;
  for (auto r : rows) {
    if (ds.z[r] == z && (d < 0 || ds.d[r] == d)) out.push_back(r);
  }
  return out;
}

Eigen::VectorXd as_response(const std::vector<int>& v, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

ModelPtr fit_one(const std::string& label, const LearnerSpec& spec, const Dataset& ds, const std::vector<std::size_t>& rows,
                 const Eigen::VectorXd& response, Target target, std::uint64_t seed, std::vector<std::string>& meta) {
  return with_context(label, [&] {
    if (rows.empty()) throw Error(ErrorCode::EmptyCell, "no training rows");
    auto fitted = fit_learner(spec, take_rows(ds.design(spec.design), rows), response, target, seed);
    std::string line = label + " = " + fitted.model->describe();
    for (const auto& note : fitted.notes) line += " [" + note + "]";
    meta.push_back(line);
    return fitted.model;
  });
}

}  // namespace

const LearnerSpec& NuisanceSpecs::outcome_for(int z, int d) const {
  const auto& c = outcome_cell[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)];
  return c ? *c : outcome;
}

std::array<std::array<bool, 2>, 2> needed_outcome_cells(const std::vector<Stratum>& strata) {
  std::array<std::array<bool, 2>, 2> need{};
  for (const auto& s : strata) {
    need[1][static_cast<std::size_t>(s.d1)] = true;
    need[0][static_cast<std::size_t>(s.d0)] = true;
  }
  return need;
}

double NuisanceFit::frac_p1_le_p0() const {
  if (rows.empty()) return 0.0;
  return static_cast<double>((p1.array() <= p0.array()).count()) / static_cast<double>(rows.size());
}

NuisanceModels fit_nuisance_models(const Dataset& ds, const std::vector<std::size_t>& train_rows,
                                   const NuisanceSpecs& specs, const NuisanceOptions& opt) {
  specs.propensity.validate();
  specs.principal0.validate();
  specs.principal1.validate();
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) specs.outcome_for(z, d).validate();
  }

  NuisanceModels out;
  out.specs = specs;
  out.pi = fit_one("propensity", specs.propensity, ds, train_rows, as_response(ds.z, train_rows), Target::Probability,
                   derive_seed(opt.seed, {1}), out.meta);
  const auto r0 = filter_rows(ds, train_rows, 0);
  const auto r1 = filter_rows(ds, train_rows, 1);
  out.p0 = fit_one("principal0", specs.principal0, ds, r0, as_response(ds.d, r0), Target::Probability,
                   derive_seed(opt.seed, {2}), out.meta);
  out.p1 = fit_one("principal1", specs.principal1, ds, r1, as_response(ds.d, r1), Target::Probability,
                   derive_seed(opt.seed, {3}), out.meta);

  const auto need = needed_outcome_cells(opt.strata);
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) {
      if (!need[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)]) continue;
      const std::string label = "outcome m" + std::to_string(z) + std::to_string(d);
      if (d == 0 && !opt.outcome_defined_when_d0) {
        throw Error(ErrorCode::UndefinedOutcome,
                    label + ": stratum requires outcomes for D = 0 units; pass outcome_defined_when_d0 to allow");
      }
      const auto rows = filter_rows(ds, train_rows, z, d);
      Eigen::VectorXd y = take_rows(ds.y, rows);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!std::isfinite(y[static_cast<Eigen::Index>(i)])) {
          throw Error(ErrorCode::DomainError, label + ": missing outcome at row " + std::to_string(rows[i]));
        }
      }
      out.m[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)] =
          fit_one(label, specs.outcome_for(z, d), ds, rows, y, Target::Mean, derive_seed(opt.seed, {4, static_cast<std::uint64_t>(2 * z + d)}),
                  out.meta);
    }
  }
  return out;
}

NuisanceFit evaluate_nuisances(const NuisanceModels& models, const Dataset& ds, const std::vector<std::size_t>& eval_rows,
                               const NuisanceOptions& opt) {
  NuisanceFit fit;
  fit.rows = eval_rows;
  fit.learner_meta = models.meta;
  auto design = [&](const LearnerSpec& s) { return take_rows(ds.design(s.design), eval_rows); };
  fit.pi = models.pi->predict(design(models.specs.propensity));
  fit.p0 = models.p0->predict(design(models.specs.principal0));
  fit.p1 = models.p1->predict(design(models.specs.principal1));

  std::size_t clipped = 0;
  const double lo = opt.clip;
  const double hi = 1.0 - opt.clip;
  for (Eigen::VectorXd* v : {&fit.pi, &fit.p0, &fit.p1}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) {
      double& x = (*v)[i];
      if (!std::isfinite(x)) throw Error(ErrorCode::DomainError, "non-finite nuisance prediction");
      if (x < lo || x > hi) {
        ++clipped;
        x = std::clamp(x, lo, hi);
      }
    }
  }
  fit.clipped_fraction = eval_rows.empty() ? 0.0 : static_cast<double>(clipped) / (3.0 * static_cast<double>(eval_rows.size()));

  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t d = 0; d < 2; ++d) {
      if (!models.m[z][d]) continue;
      fit.m[z][d] = models.m[z][d]->predict(design(models.specs.outcome_for(static_cast<int>(z), static_cast<int>(d))));
      fit.has_m[z][d] = true;
    }
  }
  return fit;
}

NuisanceFit fit_nuisances(const Dataset& ds, const NuisanceSpecs& specs, const NuisanceOptions& opt) {
  std::vector<std::size_t> all(ds.n());
  std::iota(all.begin(), all.end(), 0);
  return evaluate_nuisances(fit_nuisance_models(ds, all, specs, opt), ds, all, opt);
}

std::vector<std::size_t> FoldPlan::validation_rows(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::training_rows(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != k) out.push_back(i);
  }
  return out;
}

FoldPlan make_folds(const Dataset& ds, int K, std::uint64_t seed) {
  if (K < 2) throw Error(ErrorCode::ConfigError, "K must be at least 2");
  FoldPlan plan;
  plan.K = K;
  plan.assignment.assign(ds.n(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0xF0}));
  std::size_t counter = 0;
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) {
      auto rows = ds.cell_rows(z, d);
      if (rows.size() < static_cast<std::size_t>(K)) {
        throw Error(ErrorCode::SparseCell, "cell (Z=" + std::to_string(z) + ", D=" + std::to_string(d) + ") has " +
                                               std::to_string(rows.size()) + " members, fewer than K=" + std::to_string(K));
      }
      std::shuffle(rows.begin(), rows.end(), rng);
      for (auto r : rows) plan.assignment[r] = static_cast<int>(counter++ % static_cast<std::size_t>(K)) + 1;
    }
  }
  return plan;
}

CrossFit crossfit_nuisances(const Dataset& ds, const FoldPlan& plan, const NuisanceSpecs& specs, const NuisanceOptions& opt) {
  if (plan.assignment.size() != ds.n()) throw Error(ErrorCode::ConfigError, "fold plan does not match dataset");
  CrossFit cf;
  cf.plan = plan;
  const auto n = static_cast<Eigen::Index>(ds.n());
  NuisanceFit& all = cf.combined;
  all.rows.resize(ds.n());
  std::iota(all.rows.begin(), all.rows.end(), 0);
  all.pi.resize(n);
  all.p0.resize(n);
  all.p1.resize(n);
  double clipped = 0.0;
  for (int k = 1; k <= plan.K; ++k) {
    auto train = plan.training_rows(k);
    auto val = plan.validation_rows(k);
    if (val.empty()) throw Error(ErrorCode::SparseCell, "fold " + std::to_string(k) + " is empty");
    NuisanceOptions o = opt;
    o.seed = derive_seed(opt.seed, {static_cast<std::uint64_t>(k)});
    NuisanceFit fk = with_context("fold " + std::to_string(k), [&] {
      return evaluate_nuisances(fit_nuisance_models(ds, train, specs, o), ds, val, o);
    });
    for (std::size_t j = 0; j < val.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(val[j]);
      const auto jj = static_cast<Eigen::Index>(j);
      all.pi[r] = fk.pi[jj];
      all.p0[r] = fk.p0[jj];
      all.p1[r] = fk.p1[jj];
      for (std::size_t z = 0; z < 2; ++z) {
        for (std::size_t d = 0; d < 2; ++d) {
          if (!fk.has_m[z][d]) continue;
          if (!all.has_m[z][d]) {
            all.m[z][d] = Eigen::VectorXd::Zero(n);
            all.has_m[z][d] = true;
          }
          all.m[z][d][r] = fk.m[z][d][jj];
        }
      }
    }
    clipped += fk.clipped_fraction * static_cast<double>(val.size());
    for (const auto& line : fk.learner_meta) all.learner_meta.push_back("fold " + std::to_string(k) + ": " + line);
    cf.training_rows.push_back(std::move(train));
    cf.folds.push_back(std::move(fk));
  }
  all.clipped_fraction = ds.n() ? clipped / static_cast<double>(ds.n()) : 0.0;
  return cf;
}

}  // namespace prinstrat
