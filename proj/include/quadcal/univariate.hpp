#pragma once

#include <Eigen/Dense>

namespace quadcal {

/// Nodes and weights of a rule on [-1,1].
struct UnivariateRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// Gauss-Legendre rule with n points on [-1,1].
UnivariateRule gauss_legendre(int n);

/// Clenshaw-Curtis rule with n points on [-1,1] (extrema of Chebyshev
/// polynomials); n = 1 is the midpoint rule.
UnivariateRule clenshaw_curtis(int n);

}  // namespace quadcal
