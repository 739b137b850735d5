#include "quadcal/bayes.hpp"

#include "quadcal/errors.hpp"
#include "quadcal/univariate.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace quadcal {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PriorBox::PriorBox(Eigen::VectorXd lower, Eigen::VectorXd upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() == 0 || lower_.size() != upper_.size()) {
    throw std::invalid_argument("PriorBox: bounds must be non-empty and of equal length");
  }
  if (!lower_.allFinite() || !upper_.allFinite() || !(lower_.array() < upper_.array()).all()) {
    throw std::invalid_argument("PriorBox: need finite lower < upper in every coordinate");
  }
}

bool PriorBox::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return x.size() == lower_.size() && (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
}

double PriorBox::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return contains(x) ? -std::log(volume()) : kNegInf;
}

Eigen::VectorXd PriorBox::sample(Engine& engine) const {
  Eigen::VectorXd x(lower_.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = lower_(i) + (upper_(i) - lower_(i)) * uniform01(engine);
  return x;
}

double log_gaussian_iid(double model_output, const GaussianIIDLikelihood& likelihood) {
  return -0.5 * (likelihood.data.array() - model_output).square().sum() / (likelihood.sigma * likelihood.sigma);
}

namespace {

double log_gaussian_iid_vector(const Eigen::VectorXd& outputs, const GaussianIIDLikelihood& likelihood) {
  if (outputs.size() == 1) return log_gaussian_iid(outputs(0), likelihood);
  if (outputs.size() != likelihood.data.size()) {
    throw std::invalid_argument("gaussian likelihood: output size does not match data size");
  }
  return -0.5 * (likelihood.data - outputs).squaredNorm() / (likelihood.sigma * likelihood.sigma);
}

}  // namespace

double squared_exponential_cov(double s, double s_prime, double amplitude, double log_length,
                               double length_scale_base) {
  const double scaled = (s - s_prime) / (length_scale_base * std::pow(10.0, log_length));
  return amplitude * std::exp(-scaled * scaled);
}

Eigen::MatrixXd gp_covariance(const GPDiscrepancyLikelihood& likelihood, double amplitude, double log_length) {
  const Eigen::Index n = likelihood.locations.size();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = squared_exponential_cov(likelihood.locations(i), likelihood.locations(j), amplitude,
                                               log_length, likelihood.length_scale_base);
      k(i, j) = c;
      k(j, i) = c;
    }
    k(i, i) += likelihood.sigma_meas * likelihood.sigma_meas;
  }
  return k;
}

double log_gp_discrepancy(const Eigen::VectorXd& model_outputs, const GPDiscrepancyLikelihood& likelihood,
                          double amplitude, double log_length) {
  if (model_outputs.size() != likelihood.data.size() || likelihood.locations.size() != likelihood.data.size()) {
    throw std::invalid_argument("log_gp_discrepancy: outputs, data and locations must have equal length");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(gp_covariance(likelihood, amplitude, log_length));
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "log_gp_discrepancy: covariance not positive definite at (A, l) = (" << amplitude << ", " << log_length
        << ")";
    throw NumericalError(msg.str());
  }
  const Eigen::VectorXd misfit = likelihood.data - model_outputs;
  const Eigen::VectorXd whitened = llt.matrixL().solve(misfit);
  double value = -0.5 * whitened.squaredNorm();
  if (likelihood.include_logdet) {
    value -= llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return value;
}

double marginalize_hyperparameters(const Eigen::VectorXd& model_outputs, const GPDiscrepancyLikelihood& likelihood,
                                   int grid_amplitude, int grid_length) {
  if (grid_amplitude < 2 || grid_length < 2) {
    throw std::invalid_argument("marginalize_hyperparameters: grid sizes must be >= 2");
  }
  const UnivariateRule ga = gauss_legendre(grid_amplitude);
  const UnivariateRule gl = gauss_legendre(grid_length);
  auto affine = [](double t, double lo, double hi) { return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t; };

  // Weights are normalized to the hyper-prior (each 1D rule sums to one),
  // which also covers a collapsed interval.
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(grid_amplitude * grid_length));
  double peak = kNegInf;
  for (Eigen::Index i = 0; i < ga.size(); ++i) {
    const double amplitude = affine(ga.nodes(i), likelihood.amplitude_lower, likelihood.amplitude_upper);
    for (Eigen::Index j = 0; j < gl.size(); ++j) {
      const double log_length = affine(gl.nodes(j), likelihood.log_length_lower, likelihood.log_length_upper);
      const double term = std::log(0.25 * ga.weights(i) * gl.weights(j)) +
                          log_gp_discrepancy(model_outputs, likelihood, amplitude, log_length);
      terms.push_back(term);
      peak = std::max(peak, term);
    }
  }
  if (peak == kNegInf) throw NumericalError("marginalize_hyperparameters: every grid evaluation is -inf");
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - peak);
  return peak + std::log(sum);
}

double log_beta_likelihood(double model_output, const BetaLikelihood& likelihood) {
  if (!(model_output > 0.0 && model_output < 1.0)) return kNegInf;
  return likelihood.alpha * std::log(model_output) + likelihood.beta * std::log1p(-model_output);
}

double StatisticalModel::log_likelihood(const Eigen::VectorXd& model_outputs) const {
  struct Visitor {
    const Eigen::VectorXd& outputs;
    double operator()(const GaussianIIDLikelihood& l) const { return log_gaussian_iid_vector(outputs, l); }
    double operator()(const GPDiscrepancyLikelihood& l) const {
      return marginalize_hyperparameters(outputs, l, l.grid_amplitude, l.grid_length);
    }
    double operator()(const BetaLikelihood& l) const { return log_beta_likelihood(outputs(0), l); }
  };
  return std::visit(Visitor{model_outputs}, likelihood);
}

double log_posterior_unnormalized(const Eigen::VectorXd& model_outputs, const StatisticalModel& model,
                                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double log_prior = model.prior.log_density(x);
  if (log_prior == kNegInf) return kNegInf;
  return model.log_likelihood(model_outputs) + log_prior;
}

}  // namespace quadcal
