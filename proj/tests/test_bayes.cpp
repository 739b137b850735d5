#include "quadcal/bayes.hpp"
#include "quadcal/errors.hpp"
#include "quadcal/experiments.hpp"
#include "quadcal/rules.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace quadcal;

TEST_CASE("prior box") {
  const PriorBox box(Eigen::Vector2d(0.0, -1.0), Eigen::Vector2d(2.0, 1.0));
  CHECK(box.volume() == 4.0);
  CHECK(box.log_density(Eigen::Vector2d(1.0, 0.0)) == doctest::Approx(-std::log(4.0)));
  CHECK(box.log_density(Eigen::Vector2d(3.0, 0.0)) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS(PriorBox(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, 1.0)));
}

TEST_CASE("gaussian iid likelihood") {
  CHECK(log_gaussian_iid(0.7, {Eigen::Vector3d::Constant(0.7), 0.3}) == 0.0);
  CHECK(log_gaussian_iid(2.0, {Eigen::VectorXd::Zero(1), 1.0}) == -2.0);
  CHECK(log_gaussian_iid(2.0, {Eigen::VectorXd::Zero(1), 2.0}) == -0.5);
}

TEST_CASE("squared exponential covariance") {
  CHECK(squared_exponential_cov(0.3, 0.3, 0.7, 0.2, 0.01) == 0.7);
  CHECK(squared_exponential_cov(0.0, 1.0, 0.0, 0.5, 0.01) == 0.0);
  const double l = 0.4, base = 0.01;
  CHECK(squared_exponential_cov(0.0, base * std::pow(10.0, l), 2.0, l, base) == doctest::Approx(2.0 * std::exp(-1.0)));
}

TEST_CASE("gp discrepancy likelihood") {
  GPDiscrepancyLikelihood lik;
  lik.locations = Eigen::Vector3d(0.0, 0.5, 1.0);
  lik.data = Eigen::Vector3d(0.1, 0.2, 0.3);
  lik.sigma_meas = 0.1;

  const Eigen::Vector3d u(0.0, 0.25, 0.2);
  double iid = 0.0;
  for (int k = 0; k < 3; ++k) iid += log_gaussian_iid(u(k), {Eigen::VectorXd::Constant(1, lik.data(k)), 0.1});
  CHECK(log_gp_discrepancy(u, lik, 0.0, 0.5) == doctest::Approx(iid));
  CHECK(log_gp_discrepancy(lik.data, lik, 0.005, 0.5) == 0.0);

  GPDiscrepancyLikelihood pair;
  pair.locations = Eigen::Vector2d(0.4, 0.4);
  pair.data = Eigen::Vector2d(1.0, 0.0);
  pair.sigma_meas = 1.0;
  CHECK(log_gp_discrepancy(Eigen::Vector2d::Zero(), pair, 1.0, 0.0) == doctest::Approx(-1.0 / 3.0));

  pair.include_logdet = true;
  CHECK(log_gp_discrepancy(Eigen::Vector2d::Zero(), pair, 1.0, 0.0) ==
        doctest::Approx(-1.0 / 3.0 - 0.5 * std::log(3.0)));

  GPDiscrepancyLikelihood broken = pair;
  broken.sigma_meas = 0.0;
  CHECK_THROWS_AS(log_gp_discrepancy(Eigen::Vector2d::Zero(), broken, 1.0, 0.0), NumericalError);
}

TEST_CASE("gp covariance spectrum") {
  GPDiscrepancyLikelihood lik;
  lik.locations = Eigen::VectorXd::LinSpaced(40, 0.025, 1.975);
  lik.sigma_meas = 0.01;
  for (double a : {0.0, 0.003, 0.01}) {
    for (double l : {0.0, 0.5, 1.0}) {
      const Eigen::MatrixXd k = gp_covariance(lik, a, l);
      CHECK((k - k.transpose()).norm() == 0.0);
      const double smallest = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff();
      CHECK(smallest >= 1e-4 - 1e-10);
    }
  }
}

TEST_CASE("hyperparameter marginalization") {
  GPDiscrepancyLikelihood lik;
  lik.locations = Eigen::VectorXd::LinSpaced(40, 0.025, 1.975);
  const Eigen::VectorXd theta = toy_cp_truth();
  const Eigen::VectorXd u = toy_cp_model(theta, lik.locations);

  SUBCASE("constant integrand") {
    lik.data = u;
    CHECK(marginalize_hyperparameters(u, lik, 12, 12) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("collapsed amplitude interval") {
    lik.data = u + Eigen::VectorXd::Constant(40, 0.01);
    lik.amplitude_upper = 0.0;
    double iid = 0.0;
    for (Eigen::Index k = 0; k < 40; ++k) iid += log_gaussian_iid(u(k), {Eigen::VectorXd::Constant(1, lik.data(k)), 0.01});
    CHECK(marginalize_hyperparameters(u, lik, 12, 12) == doctest::Approx(iid));
  }
  SUBCASE("grid refinement") {
    lik.data = toy_cp_model(toy_cp_prior().lower() * 0.3 + toy_cp_prior().upper() * 0.7, lik.locations);
    const double coarse = marginalize_hyperparameters(u, lik, 8, 8);
    const double fine = marginalize_hyperparameters(u, lik, 16, 16);
    CHECK(std::abs(coarse - fine) < 1e-3 * std::max(1.0, std::abs(fine)));
  }
  SUBCASE("monotone under domination") {
    lik.data = u + 0.02 * Eigen::VectorXd::LinSpaced(40, -1.0, 1.0);
    const Eigen::VectorXd closer = u + 0.01 * Eigen::VectorXd::LinSpaced(40, -1.0, 1.0);
    CHECK(marginalize_hyperparameters(closer, lik, 12, 12) > marginalize_hyperparameters(u, lik, 12, 12));
  }
}

TEST_CASE("beta likelihood") {
  const BetaLikelihood b{40.0, 60.0};
  CHECK(log_beta_likelihood(0.4, b) == doctest::Approx(40.0 * std::log(0.4) + 60.0 * std::log(0.6)));
  CHECK(log_beta_likelihood(0.0, b) == -std::numeric_limits<double>::infinity());
  CHECK(log_beta_likelihood(1.2, b) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("log posterior") {
  const StatisticalModel model{PriorBox::unit(1), GaussianIIDLikelihood{Eigen::Vector2d(0.3, 0.5), 0.2}};
  const Eigen::VectorXd at = Eigen::VectorXd::Constant(1, 0.4);
  CHECK(log_posterior_unnormalized(at, model, Eigen::VectorXd::Constant(1, 1.5)) ==
        -std::numeric_limits<double>::infinity());
  const Eigen::VectorXd other = Eigen::VectorXd::Constant(1, 0.9);
  const double diff = log_posterior_unnormalized(at, model, at) - log_posterior_unnormalized(other, model, other);
  CHECK(diff == doctest::Approx(model.log_likelihood(at) - model.log_likelihood(other)));
  for (double x = 0.0; x <= 1.0; x += 0.05) {
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x);
    CHECK(log_posterior_unnormalized(v, model, v) <= log_posterior_unnormalized(at, model, at));
  }
}

TEST_CASE("self-normalized estimates ignore the evidence") {
  Eigen::MatrixXd nodes(1, 4);
  nodes << 0.1, 0.4, 0.6, 0.9;
  const Eigen::Vector4d ll(-3.0, -1.0, -2.0, -0.5);
  const Eigen::Vector4d w = (ll.array() - ll.maxCoeff()).exp();
  const QuadratureRule rule(nodes, w, 4, 4);
  const Eigen::Vector4d shifted = (ll.array() + 700.0 - (ll.array() + 700.0).maxCoeff()).exp();
  CHECK(apply_normalized(rule, nodes)(0) ==
        doctest::Approx(apply_normalized(QuadratureRule(nodes, shifted, 4, 4), nodes)(0)).epsilon(1e-15));
}
