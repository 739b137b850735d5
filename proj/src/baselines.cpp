#include "quadcal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace quadcal {

namespace {

using Point = std::vector<double>;

// Reference-coordinate tensor product of CC(counts[i]), weights on [-1,1]^d,
// accumulated into `out` with factor `scale`.
void accumulate_tensor(const std::vector<int>& counts, double scale, std::map<Point, double>& out) {
  std::vector<UnivariateRule> rules;
  rules.reserve(counts.size());
  for (int n : counts) rules.push_back(clenshaw_curtis(n));
  std::vector<int> idx(counts.size(), 0);
  Point point(counts.size());
  while (true) {
    double w = scale;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      point[i] = rules[i].nodes(idx[i]);
      w *= rules[i].weights(idx[i]);
    }
    out[point] += w;
    std::size_t i = 0;
    while (i < counts.size() && ++idx[i] == counts[i]) idx[i++] = 0;
    if (i == counts.size()) break;
  }
}

QuadratureRule to_rule(const PriorBox& prior, const std::map<Point, double>& merged, bool signed_weights) {
  const Eigen::Index d = prior.dimension();
  Eigen::MatrixXd nodes(d, static_cast<Eigen::Index>(merged.size()));
  Eigen::VectorXd weights(nodes.cols());
  Eigen::Index k = 0;
  for (const auto& [point, w] : merged) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double t = point[static_cast<std::size_t>(i)];
      nodes(i, k) = prior.lower()(i) + 0.5 * (t + 1.0) * (prior.upper()(i) - prior.lower()(i));
    }
    weights(k) = w;
    ++k;
  }
  weights /= weights.sum();
  return QuadratureRule(std::move(nodes), std::move(weights), 0, 0, signed_weights);
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Calls fn(levels, coefficient) for each tensor grid of the combination technique.
template <typename Fn>
void for_each_smolyak_term(int dimension, int level, Fn&& fn) {
  std::vector<int> levels(static_cast<std::size_t>(dimension), 0);
  auto recurse = [&](auto&& self, std::size_t axis, int remaining) -> void {
    if (axis == levels.size()) {
      const int j = remaining;
      if (j <= dimension - 1) fn(levels, (j % 2 == 0 ? 1.0 : -1.0) * binomial(dimension - 1, j));
      return;
    }
    for (int l = 0; l <= remaining; ++l) {
      levels[axis] = l;
      self(self, axis + 1, remaining - l);
    }
  };
  recurse(recurse, 0, level);
}

void smolyak_points(int dimension, int level, std::map<Point, double>& merged) {
  std::size_t upper = 0;
  for_each_smolyak_term(dimension, level, [&](const std::vector<int>& levels, double) {
    std::size_t n = 1;
    for (int l : levels) n *= static_cast<std::size_t>(l + 1);
    upper += n;
  });
  if (upper > kMaxGridNodes) throw std::length_error("smolyak: more than 1e7 nodes requested");
  for_each_smolyak_term(dimension, level, [&](const std::vector<int>& levels, double coefficient) {
    std::vector<int> counts(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) counts[i] = levels[i] + 1;
    accumulate_tensor(counts, coefficient, merged);
  });
}

}  // namespace

QuadratureRule tensor_grid(const PriorBox& prior, const std::vector<int>& counts) {
  if (static_cast<Eigen::Index>(counts.size()) != prior.dimension()) {
    throw std::invalid_argument("tensor_grid: one count per dimension required");
  }
  double total = 1.0;
  for (int n : counts) {
    if (n < 1) throw std::invalid_argument("tensor_grid: counts must be >= 1");
    total *= n;
  }
  if (total > static_cast<double>(kMaxGridNodes)) throw std::length_error("tensor_grid: more than 1e7 nodes requested");
  std::map<Point, double> merged;
  accumulate_tensor(counts, 1.0, merged);
  return to_rule(prior, merged, false);
}

QuadratureRule smolyak(const PriorBox& prior, int level) {
  if (level < 0) throw std::invalid_argument("smolyak: level must be >= 0");
  std::map<Point, double> merged;
  smolyak_points(prior.dimension(), level, merged);
  return to_rule(prior, merged, true);
}

std::size_t smolyak_node_count(int dimension, int level) {
  if (level < 0) throw std::invalid_argument("smolyak_node_count: level must be >= 0");
  std::map<Point, double> merged;
  smolyak_points(dimension, level, merged);
  return merged.size();
}

QuadratureRule tensor_grid_for_budget(const PriorBox& prior, std::size_t budget) {
  const int d = prior.dimension();
  int n = 1;
  while (std::pow(static_cast<double>(n + 1), d) <= static_cast<double>(budget)) ++n;
  return tensor_grid(prior, std::vector<int>(static_cast<std::size_t>(d), n));
}

QuadratureRule smolyak_for_budget(const PriorBox& prior, std::size_t budget) {
  int level = 0;
  while (smolyak_node_count(prior.dimension(), level + 1) <= budget) ++level;
  return smolyak(prior, level);
}

namespace {

RatioEstimate ratio(const Eigen::MatrixXd& values, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& log_likelihoods) {
  if (values.cols() != weights.size() || log_likelihoods.size() != weights.size() || weights.size() == 0) {
    throw std::invalid_argument("ratio estimate: values, weights and log-likelihoods must be aligned and nonempty");
  }
  const double peak = log_likelihoods.maxCoeff();
  if (!std::isfinite(peak)) throw std::invalid_argument("ratio estimate: maximum log-likelihood is not finite");
  const Eigen::VectorXd scaled = weights.cwiseProduct((log_likelihoods.array() - peak).exp().matrix());
  RatioEstimate est;
  est.numerator = values * scaled;
  est.denominator = scaled.sum();
  est.value = est.numerator / est.denominator;
  return est;
}

}  // namespace

RatioEstimate prior_rule_posterior_estimate(const QuadratureRule& rule, const Eigen::MatrixXd& values,
                                            const Eigen::VectorXd& log_likelihoods) {
  return ratio(values, rule.weights(), log_likelihoods);
}

RatioEstimate monte_carlo_posterior_mean(const Eigen::MatrixXd& values, const Eigen::VectorXd& log_likelihoods) {
  return ratio(values, Eigen::VectorXd::Ones(values.cols()), log_likelihoods);
}

}  // namespace quadcal
