#pragma once

#include "quadcal/bayes.hpp"
#include "quadcal/rules.hpp"
#include "quadcal/univariate.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace quadcal {

inline constexpr std::size_t kMaxGridNodes = 10'000'000;

/// Tensor product of Clenshaw-Curtis rules with counts[i] points along
/// axis i, mapped to the prior box; weights sum to one.
QuadratureRule tensor_grid(const PriorBox& prior, const std::vector<int>& counts);

/// Smolyak combination of the Clenshaw-Curtis sequence n_l = l + 1 mapped to
/// the prior box. Coinciding nodes are merged; weights sum to one and may be
/// negative.
QuadratureRule smolyak(const PriorBox& prior, int level);

/// Number of distinct Smolyak nodes without building the rule.
std::size_t smolyak_node_count(int dimension, int level);

/// Largest isotropic tensor grid with at most `budget` nodes (at least one node).
QuadratureRule tensor_grid_for_budget(const PriorBox& prior, std::size_t budget);

/// Highest-level Smolyak grid with at most `budget` nodes (at least level 0).
QuadratureRule smolyak_for_budget(const PriorBox& prior, std::size_t budget);

/// Self-normalized estimate sum w_k L_k f_k / sum w_k L_k with
/// L_k = exp(ll_k - max ll).
struct RatioEstimate {
  Eigen::VectorXd value;
  Eigen::VectorXd numerator;
  double denominator = 0.0;
};

/// `values` holds f(x_k) as column k.
RatioEstimate prior_rule_posterior_estimate(const QuadratureRule& rule, const Eigen::MatrixXd& values,
                                            const Eigen::VectorXd& log_likelihoods);

/// The same ratio with equal weights over prior samples.
RatioEstimate monte_carlo_posterior_mean(const Eigen::MatrixXd& values, const Eigen::VectorXd& log_likelihoods);

}  // namespace quadcal
