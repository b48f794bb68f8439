#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prinstrat/error.hpp"
#include "prinstrat/estimators.hpp"
#include "prinstrat/io.hpp"
#include "prinstrat/simulation.hpp"
#include "prinstrat/table.hpp"

namespace prinstrat::app {

/// Shared settings for `estimate` and `validate`.
struct AnalysisConfig {
  std::string input;
  ColumnMapping columns;
  std::vector<Stratum> strata{{1, 1}};
  /// constant | independence | monotone | column:NAME
  std::string theta_mode = "constant";
  std::vector<double> theta{1.0};
  /// "lo:hi:n" on the log θ scale; overrides `theta` when set.
  std::string theta_grid;
  bool references = false;
  std::vector<EstimatorKind> estimators{EstimatorKind::CDR};
  /// Learner names keyed by nuisance (propensity, principal0, principal1, outcome).
  NuisanceSpecs learners;
  NuisanceSpecs ml_learners = NuisanceSpecs::uniform(LearnerSpec::stacked({LearnerSpec::glm(), LearnerSpec::gbt()}));
  int folds = 5;
  std::uint64_t seed = 0;
  int bootstrap = 500;
  double alpha = 0.05;
  double clip = 0.01;
  bool outcome_defined_when_d0 = false;
  int histogram_bins = 20;
  double monotonicity_threshold = 0.05;
  std::string output;

  void validate() const;
};

struct SimulateConfig {
  std::vector<SimScenario> scenarios;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output;

  void validate() const;
};

/// Canonical JSON of a config; the output path is excluded.
nlohmann::json to_json(const AnalysisConfig& c);
nlohmann::json to_json(const SimulateConfig& c);
AnalysisConfig analysis_from_json(const nlohmann::json& j);
SimulateConfig simulate_from_json(const nlohmann::json& j);

/// "lo:hi:n" → n equally spaced values from lo to hi inclusive.
std::vector<double> parse_grid(const std::string& text);
/// "NAME" sets every nuisance; "propensity=NAME", "principal=NAME", "outcome=NAME" etc. set one.
void apply_learner(NuisanceSpecs& specs, const std::string& assignment);

struct Report {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  /// The first table is the one written to CSV.
  std::vector<std::pair<std::string, Table>> tables;
  std::vector<std::string> log;
  /// Free-form structured output such as per-estimate diagnostics.
  nlohmann::json details = nlohmann::json::object();

  const Table& table(const std::string& name) const;
  /// Everything except metadata; deterministic for a fixed config.
  nlohmann::json body() const;
  /// Full document: schema_version, metadata (version, seed, config_hash, timestamp), body.
  nlohmann::json document(const std::string& timestamp) const;
  std::string config_hash() const;
};

Report cmd_estimate(const AnalysisConfig& cfg);
Report cmd_simulate(const SimulateConfig& cfg);
Report cmd_validate(const AnalysisConfig& cfg);

nlohmann::json table_to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);
Report report_from_json(const nlohmann::json& doc);

/// Writes `<path>.csv` and `<path>.json` when the path has no extension, otherwise the one named format.
std::vector<std::string> write_report(const Report& r, const std::string& path);

/// 0 success, 2 config, 3 data, 4 numeric.
int exit_code(ErrorCode code);

/// Full command-line entry point.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace prinstrat::app
