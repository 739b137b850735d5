#include "quadcal/univariate.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace quadcal {

UnivariateRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  UnivariateRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  // P_n(x) and P_n'(x) by the three-term recurrence.
  auto legendre = [n](double x, double& derivative) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    derivative = n * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double derivative = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double dx = legendre(x, derivative) / derivative;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(x, derivative);
    const double w = 2.0 / ((1.0 - x * x) * derivative * derivative);
    rule.nodes(i) = -x;
    rule.nodes(n - 1 - i) = x;
    rule.weights(i) = w;
    rule.weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  return rule;
}

UnivariateRule clenshaw_curtis(int n) {
  if (n < 1) throw std::invalid_argument("clenshaw_curtis: n must be >= 1");
  if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0)};
  const int intervals = n - 1;
  UnivariateRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int j = 0; j < n; ++j) {
    // node from the reduced fraction p/q = j/intervals; shared nodes of
    // different n come out bitwise equal
    const int g = std::gcd(j, intervals);
    const int p = j / g, q = intervals / g;
    if (2 * p == q) {
      rule.nodes(j) = 0.0;
    } else if (2 * p < q) {
      rule.nodes(j) = -std::cos(std::numbers::pi * p / q);
    } else {
      rule.nodes(j) = std::cos(std::numbers::pi * (q - p) / q);
    }
    double sum = 1.0;
    for (int k = 1; 2 * k <= intervals; ++k) {
      const double b = (2 * k == intervals) ? 1.0 : 2.0;
      sum -= b / (4.0 * k * k - 1.0) * std::cos(2.0 * k * j * std::numbers::pi / intervals);
    }
    const double c = (j == 0 || j == intervals) ? 1.0 : 2.0;
    rule.weights(j) = c * sum / intervals;
  }
  return rule;
}

}  // namespace quadcal
