#pragma once

#include "quadcal/adaptive.hpp"
#include "quadcal/bayes.hpp"
#include "quadcal/genz.hpp"
#include "quadcal/rules.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace quadcal {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Experiment { analytic_beta, genz2d, genz5d, genz_dim, calibrate };

std::string to_string(Experiment experiment);
std::optional<Experiment> parse_experiment(const std::string& name);

struct ModelSpec {
  /// Builtin model name; empty when `command` is used.
  std::string builtin;
  std::vector<std::string> command;
  double timeout_s = 300.0;
  int retries = 1;
};

struct CalibrationSpec {
  ModelSpec model;
  PriorBox prior;
  GPDiscrepancyLikelihood likelihood;
  /// Parameter used to synthesize data for the builtin toy model.
  Eigen::VectorXd truth;
};

/// Every field of a run, with defaults filled in. `to_json` writes the
/// snapshot stored next to the results.
struct RunConfig {
  Experiment experiment = Experiment::analytic_beta;
  GrowthSchedule schedule;
  Eigen::Index sample_count = 100000;
  /// analytic_beta sweeps these K+1 values; empty means {sample_count}.
  std::vector<Eigen::Index> sample_counts;
  std::uint64_t seed = 1;
  int repeats = 1;
  std::string output_dir;
  double tol_exact = 1e-8;
  int threads = 1;
  /// Also run the prior-only implicit rule at matched budgets.
  bool prior_only = true;
  bool tensor_cc = false;
  bool smolyak = false;

  // analytic_beta
  double beta_alpha = 40.0;
  double beta_beta = 60.0;

  // genz experiments
  std::vector<GenzFamily> families;
  int dimension = 5;
  std::vector<int> dimensions;
  double genz_scale = 2.5;
  int measurements = 20;
  double noise_variance = 0.2;
  /// Prior samples of the Monte Carlo oracle; 0 means sample_count.
  Eigen::Index oracle_samples = 0;

  CalibrationSpec calibration;
};

/// Defaults for an experiment: full-size repeats, schedules and sample counts.
RunConfig default_config(Experiment experiment);

/// Overlays a JSON config on the defaults; unknown keys are rejected.
RunConfig parse_run_config(const nlohmann::json& json, std::optional<Experiment> experiment = std::nullopt);
RunConfig load_run_config(const std::string& path, std::optional<Experiment> experiment = std::nullopt);
nlohmann::ordered_json to_json(const RunConfig& config);

/// One CSV row; NaN errors are written as empty cells.
struct ConvergenceRow {
  std::string experiment;
  int repeat = 0;
  int iteration = 0;
  std::size_t N = 0;
  std::size_t D = 0;
  double err_adaptive = 0.0;
  double err_prior_rule = 0.0;
  double err_tensor_cc = 0.0;
  double err_smolyak = 0.0;
  double e_N = 0.0;
};

/// Mean over the repeats of one (experiment, iteration) group.
struct AggregateRow {
  std::string experiment;
  int iteration = 0;
  std::size_t D = 0;
  double mean_N = 0.0;
  double err_adaptive = 0.0;
  double se_adaptive = 0.0;
  double err_prior_rule = 0.0;
  double se_prior_rule = 0.0;
  double err_tensor_cc = 0.0;
  double err_smolyak = 0.0;
  double e_N = 0.0;
  int repeats = 0;
};

struct RunRecord {
  std::string experiment;
  int repeat = 0;
  std::string variant;
  IterationRecord record;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::vector<RunRecord> iterations;
  /// Adaptive-run invariant checks over every iteration of every run.
  std::size_t nesting_violations = 0;
  std::size_t cardinality_violations = 0;
  bool positive_weights = true;
  std::optional<QuadratureRule> rule;
  /// calibrate only.
  Eigen::VectorXd predictive_mean;
  Eigen::VectorXd predictive_std;
  Eigen::VectorXd locations;
  /// genz_dim only: family, d, mean final error, error relative to d = 2.
  std::vector<std::tuple<std::string, int, double, double>> scaled;
};

std::vector<AggregateRow> aggregate(const std::vector<ConvergenceRow>& rows);

std::string convergence_csv(const std::vector<ConvergenceRow>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

/// Mean and standard deviation of x^alpha (1-x)^beta on [0,1] by composite
/// Gauss-Legendre quadrature.
struct BetaMoments {
  double mean = 0.0;
  double sd = 0.0;
};
BetaMoments beta_oracle(double alpha, double beta);

/// The builtin calibration stand-in: a smooth 7-parameter family of
/// pressure-coefficient-like curves at locations s in [0, 2].
Eigen::VectorXd toy_cp_model(const Eigen::VectorXd& theta, const Eigen::VectorXd& locations);
PriorBox toy_cp_prior();
Eigen::VectorXd toy_cp_truth();

ConvergenceReport run_analytic_beta(const RunConfig& config);
ConvergenceReport run_genz(const RunConfig& config);
ConvergenceReport run_calibrate(const RunConfig& config);
ConvergenceReport run_experiment(const RunConfig& config);

/// Writes config.json, iterations.jsonl, convergence.csv, aggregate.csv,
/// rule.json and, when present, predictive.csv and scaled.csv.
void write_report(const RunConfig& config, const ConvergenceReport& report, const std::string& directory);

}  // namespace quadcal
