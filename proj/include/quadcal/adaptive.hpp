#pragma once

#include "quadcal/bayes.hpp"
#include "quadcal/implicit.hpp"
#include "quadcal/model.hpp"
#include "quadcal/rules.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace quadcal {

/// D_i for iterations i = 1, 2, ...: base + step * i (linear) or
/// base * 2^i (exponential). The initial one-node rule is iteration 0.
struct GrowthSchedule {
  enum class Kind { linear, exponential };

  Kind kind = Kind::linear;
  std::size_t base = 0;
  std::size_t step = 1;
  int max_iterations = 20;

  std::size_t degree(int iteration) const;
  /// Throws std::invalid_argument unless D_i is strictly increasing.
  void validate() const;
};

enum class ProposalKind { adaptive, prior };

/// Integrand whose posterior expectation is tracked, as a function of the
/// parameter x and the model output u(x).
using Quantity = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& output)>;

struct AdaptiveConfig {
  StatisticalModel model;
  std::shared_ptr<ModelEvaluator> evaluator;
  GrowthSchedule schedule;
  /// K+1 surrogate samples per iteration.
  Eigen::Index sample_count = 100000;
  ProposalKind proposal = ProposalKind::adaptive;
  std::uint64_t seed = 0;
  /// Stop once e_N drops below this; 0 disables.
  double stop_threshold = 0.0;
  /// Defaults to x itself (the posterior mean).
  Quantity quantity;
  double tol_exact = 1e-8;
  int threads = 1;
};

struct IterationRecord {
  int iteration = 0;
  std::size_t degree = 0;
  std::size_t node_count = 0;
  std::size_t new_nodes = 0;
  Eigen::VectorXd estimate;
  /// NaN until two iterations exist.
  double e_N = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  double moment_residual = 0.0;
  bool nested = true;
};

struct AdaptiveState {
  int iteration = 0;
  QuadratureRule rule;
  /// Model outputs and log-likelihoods, one per rule node.
  Eigen::MatrixXd outputs;
  Eigen::VectorXd log_likelihoods;
  Eigen::VectorXd estimate;
  std::vector<IterationRecord> history;
  std::uint64_t seed = 0;
  std::size_t model_evaluations = 0;
};

/// One prior-drawn node with weight 1, evaluated.
AdaptiveState init(const AdaptiveConfig& config);

/// Samples the surrogate, builds the next nested rule, evaluates the new
/// nodes and records the iteration. Leaves `state` untouched on failure.
AdaptiveState step(const AdaptiveState& state, const AdaptiveConfig& config);

/// ||estimate_i - estimate_{i-1}|| over the last two history records.
double consecutive_difference(const AdaptiveState& state);
double consecutive_difference(const Eigen::VectorXd& current, const Eigen::VectorXd& previous);

/// Posterior estimate of the tracked quantity: the normalized rule average
/// for the adaptive proposal, the likelihood-weighted ratio for the prior one.
Eigen::VectorXd posterior_estimate(const AdaptiveState& state, const AdaptiveConfig& config);

/// Quantity values at every node, one per column.
Eigen::MatrixXd quantity_values(const AdaptiveState& state, const AdaptiveConfig& config);

struct AdaptiveReport {
  AdaptiveState state;
  bool converged = false;
};

using StepObserver = std::function<void(const AdaptiveState& before, const AdaptiveState& after)>;

/// Iterates `step` until max_iterations or e_N < stop_threshold.
AdaptiveReport run(const AdaptiveConfig& config, const StepObserver& observer = {});

/// One JSON object per line: iteration, D, node_count, new_nodes, estimate,
/// e_N (null when undefined), wall_time_s, seed.
std::string to_json_line(const IterationRecord& record);

}  // namespace quadcal
