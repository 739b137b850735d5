#include "quadcal/adaptive.hpp"

#include "quadcal/baselines.hpp"
#include "quadcal/errors.hpp"
#include "quadcal/proposal.hpp"
#include "quadcal/random.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace quadcal {

std::size_t GrowthSchedule::degree(int iteration) const {
  if (iteration < 0) throw std::invalid_argument("GrowthSchedule: negative iteration");
  if (kind == Kind::linear) return base + step * static_cast<std::size_t>(iteration);
  if (iteration >= 63) throw std::overflow_error("GrowthSchedule: exponential degree overflows");
  return base << iteration;
}

void GrowthSchedule::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("GrowthSchedule: max_iterations must be >= 1");
  if (kind == Kind::linear && step == 0) throw std::invalid_argument("GrowthSchedule: linear step must be >= 1");
  if (kind == Kind::exponential && base == 0) throw std::invalid_argument("GrowthSchedule: exponential base must be >= 1");
}

namespace {

void validate(const AdaptiveConfig& config) {
  if (!config.evaluator) throw std::invalid_argument("adaptive: no model evaluator");
  if (config.evaluator->input_dimension() != config.model.prior.dimension()) {
    throw std::invalid_argument("adaptive: model input dimension differs from the prior dimension");
  }
  if (config.sample_count < 2) throw std::invalid_argument("adaptive: sample_count must be >= 2");
  config.schedule.validate();
}

Eigen::VectorXd log_likelihoods_of(const StatisticalModel& model, const Eigen::MatrixXd& outputs) {
  Eigen::VectorXd ll(outputs.cols());
  for (Eigen::Index k = 0; k < outputs.cols(); ++k) ll(k) = model.log_likelihood(outputs.col(k));
  return ll;
}

}  // namespace

Eigen::MatrixXd quantity_values(const AdaptiveState& state, const AdaptiveConfig& config) {
  const Eigen::MatrixXd& nodes = state.rule.nodes();
  if (!config.quantity) return nodes;
  Eigen::MatrixXd values;
  for (Eigen::Index k = 0; k < nodes.cols(); ++k) {
    const Eigen::VectorXd v = config.quantity(nodes.col(k), state.outputs.col(k));
    if (k == 0) values.resize(v.size(), nodes.cols());
    values.col(k) = v;
  }
  return values;
}

Eigen::VectorXd posterior_estimate(const AdaptiveState& state, const AdaptiveConfig& config) {
  const Eigen::MatrixXd values = quantity_values(state, config);
  if (config.proposal == ProposalKind::adaptive) return apply_normalized(state.rule, values);
  return prior_rule_posterior_estimate(state.rule, values, state.log_likelihoods).value;
}

AdaptiveState init(const AdaptiveConfig& config) {
  validate(config);
  AdaptiveState state;
  state.seed = config.seed;
  Engine engine = make_engine(derive_seed(config.seed, {0}));
  Eigen::MatrixXd node(config.model.prior.dimension(), 1);
  node.col(0) = config.model.prior.sample(engine);
  state.outputs = config.evaluator->evaluate(node);
  check_model_outputs(state.outputs, 1, config.evaluator->output_dimension());
  state.model_evaluations = 1;
  state.log_likelihoods = log_likelihoods_of(config.model, state.outputs);
  if (!std::isfinite(state.log_likelihoods(0))) {
    throw ModelError("adaptive: initial node has zero likelihood");
  }
  state.rule = QuadratureRule(std::move(node), Eigen::VectorXd::Ones(1), 1, 1);
  state.estimate = posterior_estimate(state, config);
  return state;
}

AdaptiveState step(const AdaptiveState& state, const AdaptiveConfig& config) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const int iteration = state.iteration + 1;
  const std::size_t degree = config.schedule.degree(iteration);
  const std::uint64_t seed = derive_seed(config.seed, {static_cast<std::uint64_t>(iteration)});
  const PriorBox& prior = config.model.prior;

  Eigen::MatrixXd samples;
  if (config.proposal == ProposalKind::adaptive) {
    const ProposalSurrogate surrogate(state.rule.nodes(), state.log_likelihoods, prior);
    samples = surrogate.sample(config.sample_count, seed, config.threads);
  } else {
    samples = sample_prior(prior, config.sample_count, seed);
  }

  ImplicitRuleOptions options;
  options.map = BoxMap<double>::from_box(prior.lower(), prior.upper());
  options.tol_exact = config.tol_exact;
  const MultiIndexBasis basis(prior.dimension(), degree + 1);
  ImplicitRuleStats stats;
  QuadratureRule rule = construct_implicit_rule(state.rule, samples, basis, options, &stats);

  const Eigen::Index old_count = state.rule.size();
  const Eigen::Index new_count = rule.size() - old_count;
  const Eigen::MatrixXd new_nodes = rule.nodes().rightCols(new_count);
  const Eigen::MatrixXd new_outputs = config.evaluator->evaluate(new_nodes);
  check_model_outputs(new_outputs, new_count, config.evaluator->output_dimension());

  AdaptiveState next;
  next.iteration = iteration;
  next.seed = state.seed;
  next.model_evaluations = state.model_evaluations + static_cast<std::size_t>(new_count);
  next.outputs.resize(state.outputs.rows(), rule.size());
  next.outputs << state.outputs, new_outputs;
  next.log_likelihoods.resize(rule.size());
  next.log_likelihoods << state.log_likelihoods, log_likelihoods_of(config.model, new_outputs);
  const bool nested = is_nested(state.rule, rule, default_nesting_tolerance(state.rule, rule));
  next.rule = QuadratureRule(rule.nodes(), rule.weights(), rule.exactness_count(),
                             static_cast<std::size_t>(rule.size()));
  next.estimate = posterior_estimate(next, config);
  next.history = state.history;

  IterationRecord record;
  record.iteration = iteration;
  record.degree = degree;
  record.node_count = static_cast<std::size_t>(rule.size());
  record.new_nodes = static_cast<std::size_t>(new_count);
  record.estimate = next.estimate;
  record.e_N = next.history.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : consecutive_difference(next.estimate, next.history.back().estimate);
  record.seed = seed;
  record.moment_residual = stats.moment_residual;
  record.nested = nested;
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  next.history.push_back(record);
  return next;
}

double consecutive_difference(const Eigen::VectorXd& current, const Eigen::VectorXd& previous) {
  if (current.size() != previous.size()) throw std::invalid_argument("consecutive_difference: size mismatch");
  return (current - previous).norm();
}

double consecutive_difference(const AdaptiveState& state) {
  if (state.history.size() < 2) throw std::invalid_argument("consecutive_difference: need two iterations");
  const auto& h = state.history;
  return consecutive_difference(h[h.size() - 1].estimate, h[h.size() - 2].estimate);
}

AdaptiveReport run(const AdaptiveConfig& config, const StepObserver& observer) {
  AdaptiveReport report;
  report.state = init(config);
  for (int i = 0; i < config.schedule.max_iterations; ++i) {
    AdaptiveState next = step(report.state, config);
    if (observer) observer(report.state, next);
    report.state = std::move(next);
    const double e = report.state.history.back().e_N;
    if (config.stop_threshold > 0.0 && std::isfinite(e) && e < config.stop_threshold) {
      report.converged = true;
      break;
    }
  }
  return report;
}

std::string to_json_line(const IterationRecord& record) {
  nlohmann::ordered_json j;
  j["iteration"] = record.iteration;
  j["D"] = record.degree;
  j["node_count"] = record.node_count;
  j["new_nodes"] = record.new_nodes;
  j["estimate"] = std::vector<double>(record.estimate.data(), record.estimate.data() + record.estimate.size());
  if (std::isfinite(record.e_N)) {
    j["e_N"] = record.e_N;
  } else {
    j["e_N"] = nullptr;
  }
  j["wall_time_s"] = record.wall_time_s;
  j["seed"] = record.seed;
  return j.dump();
}

}  // namespace quadcal
