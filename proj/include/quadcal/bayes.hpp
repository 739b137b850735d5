#pragma once

#include "quadcal/random.hpp"

#include <Eigen/Dense>

#include <variant>

namespace quadcal {

/// Uniform prior on an axis-aligned box.
class PriorBox {
 public:
  PriorBox() = default;
  PriorBox(Eigen::VectorXd lower, Eigen::VectorXd upper);

  static PriorBox unit(int dimension) {
    return PriorBox(Eigen::VectorXd::Zero(dimension), Eigen::VectorXd::Ones(dimension));
  }

  int dimension() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  double volume() const { return (upper_ - lower_).prod(); }
  double diameter() const { return (upper_ - lower_).norm(); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// -log(volume) inside, -inf outside.
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd sample(Engine& engine) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

struct GaussianIIDLikelihood {
  Eigen::VectorXd data;
  double sigma = 1.0;
};

/// Observation model z_k = u(x; s_k) + delta(s_k) + eps_k with a
/// squared-exponential discrepancy delta and i.i.d. noise eps.
struct GPDiscrepancyLikelihood {
  Eigen::VectorXd data;
  Eigen::VectorXd locations;
  double sigma_meas = 0.01;
  double length_scale_base = 0.01;
  double amplitude_lower = 0.0;
  double amplitude_upper = 0.01;
  double log_length_lower = 0.0;
  double log_length_upper = 1.0;
  bool include_logdet = false;
  int grid_amplitude = 12;
  int grid_length = 12;
};

/// q(z|u) proportional to u^alpha (1-u)^beta for a scalar output in (0,1).
struct BetaLikelihood {
  double alpha = 40.0;
  double beta = 60.0;
};

using Likelihood = std::variant<GaussianIIDLikelihood, GPDiscrepancyLikelihood, BetaLikelihood>;

/// -1/2 sum_k (u - z_k)^2 / sigma^2.
double log_gaussian_iid(double model_output, const GaussianIIDLikelihood& likelihood);

/// A exp(-((s - s') / (L 10^l))^2).
double squared_exponential_cov(double s, double s_prime, double amplitude, double log_length,
                               double length_scale_base);

/// sigma^2 I + C(A, l) at the measurement locations.
Eigen::MatrixXd gp_covariance(const GPDiscrepancyLikelihood& likelihood, double amplitude, double log_length);

/// -1/2 d^T K^{-1} d (minus 1/2 log det K when enabled) with d = z - u.
double log_gp_discrepancy(const Eigen::VectorXd& model_outputs, const GPDiscrepancyLikelihood& likelihood,
                          double amplitude, double log_length);

/// log of the hyper-prior average of exp(log_gp_discrepancy) over the
/// (A, l) box, on a tensor Gauss-Legendre grid in log-sum-exp arithmetic.
double marginalize_hyperparameters(const Eigen::VectorXd& model_outputs, const GPDiscrepancyLikelihood& likelihood,
                                   int grid_amplitude, int grid_length);

double log_beta_likelihood(double model_output, const BetaLikelihood& likelihood);

struct StatisticalModel {
  PriorBox prior;
  Likelihood likelihood;

  /// Unnormalized log-likelihood of a model output vector.
  double log_likelihood(const Eigen::VectorXd& model_outputs) const;
};

/// log q(z|x) + log q(x); -inf outside the prior box.
double log_posterior_unnormalized(const Eigen::VectorXd& model_outputs, const StatisticalModel& model,
                                  const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace quadcal
