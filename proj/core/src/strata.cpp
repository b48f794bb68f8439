#include "prinstrat/strata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "prinstrat/error.hpp"

namespace prinstrat {

namespace {

void check_margins(const MarginPair& m, const AlgebraOptions& opt) {
  auto ok = [&](double p) {
    if (!std::isfinite(p)) return false;
    return opt.allow_boundary ? (p >= 0.0 && p <= 1.0) : (p > 0.0 && p < 1.0);
  };
  if (!ok(m.p0) || !ok(m.p1)) {
    std::ostringstream os;
    os << "margins (" << m.p0 << ", " << m.p1 << ") outside (0,1)";
    throw Error(ErrorCode::DegenerateMargin, os.str());
  }
}

void check_theta(double theta) {
  if (!(theta > 0.0) || std::isnan(theta)) {
    std::ostringstream os;
    os << "theta must be positive, got " << theta;
    throw Error(ErrorCode::InvalidTheta, os.str());
  }
}

// δ for margins (a, b) and odds ratio θ; each branch is a sum of nonnegative terms.
double delta_raw(double a, double b, double theta) {
  if (theta >= 1.0) {
    const double t = theta - 1.0;
    const double d = a - b;
    return 1.0 + 2.0 * t * (a * (1.0 - b) + b * (1.0 - a)) + t * t * d * d;
  }
  const double u = 1.0 - theta;
  const double s = a + b - 1.0;
  return theta * theta + 2.0 * theta * u * (a * b + (1.0 - a) * (1.0 - b)) + u * u * s * s;
}

// Root of (θ−1)e² − [1+(θ−1)(a+b)]e + θab = 0 lying in the Fréchet box.
double top_cell(double a, double b, double theta) {
  const double B = 1.0 + (theta - 1.0) * (a + b);
  const double sq = std::sqrt(delta_raw(a, b, theta));
  if (B > 0.0) return 2.0 * theta * a * b / (B + sq);
  return (sq - B) / (2.0 * (1.0 - theta));
}

bool near_one(double theta, const AlgebraOptions& opt) {
  return std::abs(theta - 1.0) < opt.theta_one_band;
}

StrataProbs product_cells(const MarginPair& m) {
  return {(1.0 - m.p0) * (1.0 - m.p1), (1.0 - m.p0) * m.p1, m.p0 * (1.0 - m.p1), m.p0 * m.p1, 1.0};
}

StrataProbs upper_cells(const MarginPair& m) {
  const double e11 = std::min(m.p0, m.p1);
  return {1.0 - std::max(m.p0, m.p1), std::max(m.p1 - m.p0, 0.0), std::max(m.p0 - m.p1, 0.0), e11,
          std::numeric_limits<double>::infinity()};
}

double upper_partial(double pz, double pother) {
  if (pz < pother) return 1.0;
  if (pz > pother) return 0.0;
  return 0.5;
}

}  // namespace

std::string Stratum::label() const { return std::to_string(d0) + std::to_string(d1); }

Stratum Stratum::parse(const std::string& label) {
  if (label == "11") return {1, 1};
  if (label == "01") return {0, 1};
  if (label == "00") return {0, 0};
  if (label == "10") return {1, 0};
  throw Error(ErrorCode::ConfigError, "unknown stratum '" + label + "' (expected 11, 01, 00 or 10)");
}

std::vector<Stratum> Stratum::all() { return {{1, 1}, {0, 1}, {0, 0}, {1, 0}}; }

double StrataProbs::cell(Stratum s) const {
  if (s.d0 == 1 && s.d1 == 1) return e11;
  if (s.d0 == 0 && s.d1 == 1) return e01;
  if (s.d0 == 1 && s.d1 == 0) return e10;
  return e00;
}

ThetaValue ThetaValue::finite(double theta) {
  check_theta(theta);
  if (std::isinf(theta)) return infinite();
  return {ThetaKind::Finite, theta};
}

SensitivitySpec SensitivitySpec::constant(double theta) {
  check_theta(theta);
  SensitivitySpec s;
  s.mode_ = Mode::Constant;
  s.theta_ = theta;
  return s;
}

SensitivitySpec SensitivitySpec::independence() {
  SensitivitySpec s;
  s.mode_ = Mode::Independence;
  return s;
}

SensitivitySpec SensitivitySpec::monotone(bool assume_p1_gt_p0) {
  if (!assume_p1_gt_p0) {
    throw Error(ErrorCode::ConfigError,
                "monotone mode requires the explicit assume_p1_gt_p0 assertion");
  }
  SensitivitySpec s;
  s.mode_ = Mode::Monotone;
  s.theta_ = std::numeric_limits<double>::infinity();
  return s;
}

SensitivitySpec SensitivitySpec::per_unit(std::vector<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || !(values[i] > 0.0)) {
      std::ostringstream os;
      os << "per-unit theta at row " << i << " is " << values[i] << "; must be finite and > 0";
      throw Error(ErrorCode::InvalidTheta, os.str());
    }
  }
  SensitivitySpec s;
  s.mode_ = Mode::PerUnit;
  s.values_ = std::move(values);
  return s;
}

ThetaValue SensitivitySpec::at(std::size_t i) const {
  switch (mode_) {
    case Mode::Constant:
      return std::isinf(theta_) ? ThetaValue::infinite() : ThetaValue{ThetaKind::Finite, theta_};
    case Mode::Independence: return ThetaValue::independence();
    case Mode::Monotone: return ThetaValue::monotone();
    case Mode::PerUnit:
      if (i >= values_.size()) {
        throw Error(ErrorCode::ConfigError, "per-unit theta has no value for row " + std::to_string(i));
      }
      return {ThetaKind::Finite, values_[i]};
  }
  return ThetaValue::independence();
}

SensitivitySpec SensitivitySpec::subset(const std::vector<std::size_t>& rows) const {
  if (mode_ != Mode::PerUnit) return *this;
  std::vector<double> v;
  v.reserve(rows.size());
  for (auto r : rows) v.push_back(at(r).value);
  return per_unit(std::move(v));
}

std::string SensitivitySpec::mode_name() const {
  switch (mode_) {
    case Mode::Constant: return "constant";
    case Mode::Independence: return "independence";
    case Mode::Monotone: return "monotone";
    case Mode::PerUnit: return "per_unit";
  }
  return "unknown";
}

std::string SensitivitySpec::summary() const {
  std::ostringstream os;
  os.precision(10);
  switch (mode_) {
    case Mode::Constant:
      if (std::isinf(theta_)) {
        os << "constant:inf";
      } else {
        os << "constant:" << theta_;
      }
      break;
    case Mode::Independence: os << "independence"; break;
    case Mode::Monotone: os << "monotone"; break;
    case Mode::PerUnit: {
      const double mean =
          values_.empty() ? 0.0 : std::accumulate(values_.begin(), values_.end(), 0.0) / values_.size();
      os << "per_unit(mean=" << mean << ")";
      break;
    }
  }
  return os.str();
}

double compute_delta(const MarginPair& m, double theta, const AlgebraOptions& opt) {
  check_margins(m, opt);
  check_theta(theta);
  if (std::isinf(theta)) throw Error(ErrorCode::InvalidTheta, "delta undefined for infinite theta");
  if (theta == 1.0) throw Error(ErrorCode::ThetaOne, "theta = 1 uses the product branch");
  return std::max(delta_raw(m.p0, m.p1, theta), 0.0);
}

StrataProbs cell_probs(const MarginPair& m, const ThetaValue& theta, const AlgebraOptions& opt) {
  check_margins(m, opt);
  switch (theta.kind) {
    case ThetaKind::Independence: return product_cells(m);
    case ThetaKind::Monotone:
    case ThetaKind::Infinite: return upper_cells(m);
    case ThetaKind::Finite: break;
  }
  const double t = theta.value;
  check_theta(t);
  if (std::isinf(t)) return upper_cells(m);
  if (near_one(t, opt)) return product_cells(m);
  StrataProbs out;
  out.e11 = top_cell(m.p0, m.p1, t);
  out.e10 = top_cell(m.p0, 1.0 - m.p1, 1.0 / t);
  out.e01 = top_cell(1.0 - m.p0, m.p1, 1.0 / t);
  out.e00 = top_cell(1.0 - m.p0, 1.0 - m.p1, t);
  out.delta = std::max(delta_raw(m.p0, m.p1, t), 0.0);
  return out;
}

StrataProbs cell_probs(const MarginPair& m, const SensitivitySpec& spec, std::size_t row,
                       const AlgebraOptions& opt) {
  return cell_probs(m, spec.at(row), opt);
}

double d_e11_dp(const MarginPair& m, const ThetaValue& theta, int z, const AlgebraOptions& opt) {
  check_margins(m, opt);
  const double pz = z == 0 ? m.p0 : m.p1;
  const double po = z == 0 ? m.p1 : m.p0;
  switch (theta.kind) {
    case ThetaKind::Independence: return po;
    case ThetaKind::Monotone:
    case ThetaKind::Infinite: return upper_partial(pz, po);
    case ThetaKind::Finite: break;
  }
  const double t = theta.value;
  check_theta(t);
  if (std::isinf(t)) return upper_partial(pz, po);
  if (near_one(t, opt)) return po;
  const StrataProbs c = cell_probs(m, theta, opt);
  if (c.delta < opt.delta_guard) {
    std::ostringstream os;
    os << "delta = " << c.delta << " below guard " << opt.delta_guard;
    throw Error(ErrorCode::DeltaUnderflow, os.str());
  }
  const double off = z == 0 ? c.e01 : c.e10;
  return (t * off + c.e11) / std::sqrt(c.delta);
}

double d_e11_dp(const MarginPair& m, double theta, int z, const AlgebraOptions& opt) {
  return d_e11_dp(m, ThetaValue::finite(theta), z, opt);
}

std::pair<double, double> cell_partials(const MarginPair& m, const ThetaValue& theta, Stratum s,
                                        const AlgebraOptions& opt) {
  const double g0 = d_e11_dp(m, theta, 0, opt);
  const double g1 = d_e11_dp(m, theta, 1, opt);
  if (s.d0 == 1 && s.d1 == 1) return {g0, g1};
  if (s.d0 == 0 && s.d1 == 1) return {-g0, 1.0 - g1};
  if (s.d0 == 1 && s.d1 == 0) return {1.0 - g0, -g1};
  return {-1.0 + g0, -1.0 + g1};
}

std::pair<double, double> cell_partials(const MarginPair& m, const SensitivitySpec& spec, Stratum s,
                                        std::size_t row, const AlgebraOptions& opt) {
  return cell_partials(m, spec.at(row), s, opt);
}

}  // namespace prinstrat
