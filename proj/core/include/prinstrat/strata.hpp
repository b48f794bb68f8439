#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace prinstrat {

/// Pair of margins p_z = Pr(D = 1 | X, Z = z).
struct MarginPair {
  double p0;
  double p1;
};

/// Principal stratum (D(0), D(1)) = (d0, d1).
struct Stratum {
  int d0;
  int d1;

  /// "11", "01", "00" or "10" (d0 first).
  std::string label() const;
  static Stratum parse(const std::string& label);
  static std::vector<Stratum> all();

  friend bool operator==(const Stratum&, const Stratum&) = default;
};

struct StrataProbs {
  double e00;
  double e01;
  double e10;
  double e11;
  double delta;

  double cell(Stratum s) const;
};

enum class ThetaKind { Finite, Infinite, Independence, Monotone };

/// Odds-ratio specification at a single covariate value.
struct ThetaValue {
  ThetaKind kind = ThetaKind::Finite;
  double value = 1.0;

  static ThetaValue finite(double theta);
  static ThetaValue infinite() { return {ThetaKind::Infinite, 0.0}; }
  static ThetaValue independence() { return {ThetaKind::Independence, 1.0}; }
  static ThetaValue monotone() { return {ThetaKind::Monotone, 0.0}; }
};

/// How θ(X) is specified across a sample.
class SensitivitySpec {
 public:
  enum class Mode { Constant, Independence, Monotone, PerUnit };

  /// θ > 0 or +inf; throws InvalidTheta otherwise.
  static SensitivitySpec constant(double theta);
  static SensitivitySpec independence();
  /// Requires the caller to assert D(1) >= D(0); throws ConfigError otherwise.
  static SensitivitySpec monotone(bool assume_p1_gt_p0);
  /// All values must be finite and > 0.
  static SensitivitySpec per_unit(std::vector<double> values);

  Mode mode() const { return mode_; }
  double constant_value() const { return theta_; }
  const std::vector<double>& values() const { return values_; }

  /// θ for observation i (i is ignored unless PerUnit).
  ThetaValue at(std::size_t i) const;
  /// Restriction to the given rows (identity unless PerUnit).
  SensitivitySpec subset(const std::vector<std::size_t>& rows) const;
  /// Short text such as "constant:2", "monotone" or "per_unit(mean=1.48)".
  std::string summary() const;
  std::string mode_name() const;

 private:
  Mode mode_ = Mode::Independence;
  double theta_ = 1.0;
  std::vector<double> values_;
};

struct AlgebraOptions {
  bool allow_boundary = false;
  double delta_guard = 1e-12;
  double theta_one_band = 1e-9;
};

/// δ = [1+(θ−1)(p0+p1)]² − 4θ(θ−1)p0p1, evaluated without cancellation.
double compute_delta(const MarginPair& m, double theta, const AlgebraOptions& opt = {});

StrataProbs cell_probs(const MarginPair& m, const ThetaValue& theta, const AlgebraOptions& opt = {});
StrataProbs cell_probs(const MarginPair& m, const SensitivitySpec& spec, std::size_t row = 0,
                       const AlgebraOptions& opt = {});

/// ∂e11/∂p_z holding p_{1−z} and θ fixed.
double d_e11_dp(const MarginPair& m, const ThetaValue& theta, int z, const AlgebraOptions& opt = {});
double d_e11_dp(const MarginPair& m, double theta, int z, const AlgebraOptions& opt = {});

/// (∂e_s/∂p0, ∂e_s/∂p1) for stratum s.
std::pair<double, double> cell_partials(const MarginPair& m, const ThetaValue& theta, Stratum s,
                                        const AlgebraOptions& opt = {});
std::pair<double, double> cell_partials(const MarginPair& m, const SensitivitySpec& spec, Stratum s,
                                        std::size_t row = 0, const AlgebraOptions& opt = {});

}  // namespace prinstrat
