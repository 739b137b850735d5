#pragma once

#include "quadcal/random.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace quadcal {

enum class GenzFamily { oscillatory, product_peak, corner_peak, gaussian, c0, discontinuous };

std::string to_string(GenzFamily family);
std::optional<GenzFamily> parse_genz_family(const std::string& name);

/// Genz test function with shape `a` and translation `b`.
///
/// The discontinuous family vanishes when x_1 > b_1 or x_2 > b_2; with
/// `discontinuity_requires_all` it vanishes only when both hold.
struct GenzFunction {
  GenzFamily family = GenzFamily::oscillatory;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  bool discontinuity_requires_all = false;

  int dimension() const { return static_cast<int>(a.size()); }
};

double evaluate_genz(const GenzFunction& fn, const Eigen::Ref<const Eigen::VectorXd>& x);

/// a, b uniform on [0,1]^d, then a rescaled to 2-norm `scale`.
GenzFunction random_genz(GenzFamily family, int dimension, double scale, Engine& engine);

/// The bivariate fixtures centred on (1/2, 1/2): product peak
/// prod (1/4 + (x_i - 1/2)^2)^-1, c0 exp(-sum |x_i - 1/2|) and the
/// discontinuous exp(sum x_i), zero when x_1 > 3/5 and x_2 > 3/5.
GenzFunction genz2d_fixture(GenzFamily family);

struct SyntheticDataset {
  Eigen::VectorXd z;
  Eigen::VectorXd truth;
  double sigma = 0.0;
};

/// m measurements u(x*) + N(0, sigma^2).
SyntheticDataset generate_data(const GenzFunction& fn, const Eigen::VectorXd& truth, double sigma, int m,
                               Engine& engine);

}  // namespace quadcal
