#include "quadcal/baselines.hpp"
#include "quadcal/genz.hpp"
#include "quadcal/univariate.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace quadcal;

TEST_CASE("clenshaw-curtis") {
  const UnivariateRule one = clenshaw_curtis(1);
  CHECK(one.nodes(0) == 0.0);
  CHECK(one.weights(0) == 2.0);

  const UnivariateRule three = clenshaw_curtis(3);
  CHECK(three.nodes(0) == doctest::Approx(-1.0));
  CHECK(three.nodes(1) == doctest::Approx(0.0));
  CHECK(three.nodes(2) == doctest::Approx(1.0));
  CHECK(three.weights(0) == doctest::Approx(1.0 / 3.0));
  CHECK(three.weights(1) == doctest::Approx(4.0 / 3.0));
  CHECK(three.weights(2) == doctest::Approx(1.0 / 3.0));

  for (int n = 1; n <= 40; ++n) {
    const UnivariateRule r = clenshaw_curtis(n);
    CHECK(r.weights.sum() == doctest::Approx(2.0));
    CHECK(r.weights.minCoeff() > 0.0);
    if (n >= 3) CHECK(r.weights.dot(r.nodes.array().square().matrix()) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    for (int p = 0; p < n; ++p) {
      const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
      CHECK(std::abs(r.weights.dot(r.nodes.array().pow(p).matrix()) - exact) <= 1e-12);
    }
  }
}

TEST_CASE("gauss-legendre") {
  for (int n = 1; n <= 20; ++n) {
    const UnivariateRule r = gauss_legendre(n);
    for (int p = 0; p < 2 * n; ++p) {
      const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
      CHECK(std::abs(r.weights.dot(r.nodes.array().pow(p).matrix()) - exact) <= 1e-13);
    }
  }
}

TEST_CASE("tensor grids") {
  const PriorBox box(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(2.0, 5.0));
  const QuadratureRule center = tensor_grid(box, {1, 1});
  CHECK(center.size() == 1);
  CHECK(center.nodes().col(0).isApprox(Eigen::Vector2d(1.0, 3.0)));
  CHECK(center.weights()(0) == doctest::Approx(1.0));
  const QuadratureRule nine = tensor_grid(box, {3, 3});
  CHECK(nine.size() == 9);
  CHECK(nine.weights().minCoeff() > 0.0);
  const QuadratureRule four = tensor_grid(box, {2, 2});
  const Eigen::VectorXd prod = (four.nodes().row(0).array() * four.nodes().row(1).array()).transpose();
  CHECK(four.weights().dot(prod) == doctest::Approx(3.0));
  CHECK(tensor_grid_for_budget(PriorBox::unit(3), 30).size() == 27);
  CHECK(tensor_grid_for_budget(PriorBox::unit(3), 5).size() == 1);
}

TEST_CASE("smolyak grids") {
  const PriorBox unit2 = PriorBox::unit(2);
  const QuadratureRule zero = smolyak(unit2, 0);
  CHECK(zero.size() == 1);
  CHECK(zero.nodes().col(0).isApprox(Eigen::Vector2d(0.5, 0.5)));
  for (int level = 0; level <= 5; ++level) {
    CHECK(smolyak_node_count(3, level) == static_cast<std::size_t>(smolyak(PriorBox::unit(3), level).size()));
  }
  const QuadratureRule l4 = smolyak(unit2, 4);
  CHECK(l4.weights().sum() == doctest::Approx(1.0));
  const QuadratureRule t = tensor_grid(unit2, {5, 5});
  for (int p = 0; p <= 2; ++p) {
    for (int q = 0; q <= 2; ++q) {
      auto moment = [&](const QuadratureRule& r) {
        return r.weights().dot((r.nodes().row(0).array().pow(p) * r.nodes().row(1).array().pow(q)).matrix().transpose());
      };
      CHECK(std::abs(moment(l4) - moment(t)) <= 1e-10);
    }
  }
  CHECK(smolyak_for_budget(unit2, 1).size() == 1);
}

TEST_CASE("ratio estimators") {
  Eigen::MatrixXd nodes(1, 3);
  nodes << 0.2, 0.5, 0.8;
  const QuadratureRule rule(nodes, Eigen::Vector3d(0.25, 0.5, 0.25), 1, 3);
  const Eigen::RowVector3d f(1.0, 2.0, 4.0);
  CHECK(prior_rule_posterior_estimate(rule, f, Eigen::Vector3d::Constant(-4.0)).value(0) == doctest::Approx(2.25));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(prior_rule_posterior_estimate(rule, f, Eigen::Vector3d(-inf, 0.0, -inf)).value(0) == 2.0);
  const Eigen::Vector3d ll(-1.0, -2.5, 0.3);
  CHECK(prior_rule_posterior_estimate(rule, f, ll).value(0) ==
        doctest::Approx(prior_rule_posterior_estimate(rule, f, (ll.array() - 900.0).matrix()).value(0)));

  CHECK(monte_carlo_posterior_mean(Eigen::RowVector3d::Constant(3.5), ll).value(0) == doctest::Approx(3.5));
  CHECK(monte_carlo_posterior_mean(f, Eigen::Vector3d::Zero()).value(0) == doctest::Approx(7.0 / 3.0));
  CHECK(monte_carlo_posterior_mean(Eigen::RowVector2d(1.5, 9.0), Eigen::Vector2d(0.0, -inf)).value(0) == 1.5);
}

TEST_CASE("genz families against hand-expanded formulas") {
  Engine engine = make_engine(8);
  const double pi = std::numbers::pi;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 4;
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = uniform01(engine);
    for (GenzFamily family : {GenzFamily::oscillatory, GenzFamily::product_peak, GenzFamily::corner_peak,
                              GenzFamily::gaussian, GenzFamily::c0, GenzFamily::discontinuous}) {
      const GenzFunction fn = random_genz(family, d, 2.5, engine);
      double expected = 0.0;
      switch (family) {
        case GenzFamily::oscillatory: {
          double s = 2.0 * pi * fn.b(0);
          for (int i = 0; i < d; ++i) s += fn.a(i) * x(i);
          expected = std::cos(s);
          break;
        }
        case GenzFamily::product_peak:
          expected = 1.0;
          for (int i = 0; i < d; ++i) expected *= 1.0 / (std::pow(fn.a(i), -2) + std::pow(x(i) - fn.b(i), 2));
          break;
        case GenzFamily::corner_peak: {
          double s = 1.0;
          for (int i = 0; i < d; ++i) s += fn.a(i) * x(i);
          expected = std::pow(s, -(d + 1));
          break;
        }
        case GenzFamily::gaussian: {
          double s = 0.0;
          for (int i = 0; i < d; ++i) s += fn.a(i) * fn.a(i) * (x(i) - fn.b(i)) * (x(i) - fn.b(i));
          expected = std::exp(-s);
          break;
        }
        case GenzFamily::c0: {
          double s = 0.0;
          for (int i = 0; i < d; ++i) s += fn.a(i) * std::abs(x(i) - fn.b(i));
          expected = std::exp(-s);
          break;
        }
        case GenzFamily::discontinuous: {
          double s = 0.0;
          for (int i = 0; i < d; ++i) s += fn.a(i) * x(i);
          expected = (x(0) > fn.b(0) || x(1) > fn.b(1)) ? 0.0 : std::exp(s);
          break;
        }
      }
      const double got = evaluate_genz(fn, x);
      CHECK(std::abs(got - expected) <= 1e-14 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST_CASE("genz properties") {
  Engine engine = make_engine(9);
  const GenzFunction g = random_genz(GenzFamily::gaussian, 4, 2.5, engine);
  CHECK(evaluate_genz(g, g.b) == 1.0);
  CHECK(g.a.norm() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK((g.b.array() >= 0.0).all());
  CHECK((g.b.array() <= 1.0).all());
  const GenzFunction c = random_genz(GenzFamily::c0, 3, 2.5, engine);
  CHECK(evaluate_genz(c, c.b) == 1.0);
  const GenzFunction disc = random_genz(GenzFamily::discontinuous, 3, 2.5, engine);
  Eigen::VectorXd beyond = disc.b;
  beyond(0) = std::min(1.0, disc.b(0) + 0.01);
  if (beyond(0) > disc.b(0)) CHECK(evaluate_genz(disc, beyond) == 0.0);

  Engine e1 = make_engine(10), e2 = make_engine(10);
  const GenzFunction r1 = random_genz(GenzFamily::oscillatory, 5, 2.5, e1);
  const GenzFunction r2 = random_genz(GenzFamily::oscillatory, 5, 2.5, e2);
  CHECK(r1.a == r2.a);
  CHECK(r1.b == r2.b);

  const GenzFunction corner = random_genz(GenzFamily::corner_peak, 3, 2.5, engine);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.3);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd y = x;
    y(i) += 0.1;
    CHECK(evaluate_genz(corner, y) < evaluate_genz(corner, x));
  }
}

TEST_CASE("genz2d fixtures") {
  const GenzFunction disc = genz2d_fixture(GenzFamily::discontinuous);
  CHECK(evaluate_genz(disc, Eigen::Vector2d(0.7, 0.7)) == 0.0);
  CHECK(evaluate_genz(disc, Eigen::Vector2d(0.7, 0.5)) == doctest::Approx(std::exp(1.2)));
  const GenzFunction peak = genz2d_fixture(GenzFamily::product_peak);
  CHECK(evaluate_genz(peak, Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(16.0));
  CHECK(evaluate_genz(genz2d_fixture(GenzFamily::c0), Eigen::Vector2d(0.5, 0.5)) == 1.0);
}

TEST_CASE("synthetic data") {
  const GenzFunction fn = genz2d_fixture(GenzFamily::c0);
  const Eigen::Vector2d truth(0.3, 0.6);
  Engine engine = make_engine(12);
  const SyntheticDataset exact = generate_data(fn, truth, 0.0, 5, engine);
  CHECK((exact.z.array() == evaluate_genz(fn, truth)).all());

  const double sigma = std::sqrt(0.2);
  const int m = 20000;
  const SyntheticDataset noisy = generate_data(fn, truth, sigma, m, engine);
  CHECK(std::abs(noisy.z.mean() - evaluate_genz(fn, truth)) <= 3.0 * sigma / std::sqrt(m));

  Engine a = make_engine(4), b = make_engine(4);
  CHECK(generate_data(fn, truth, sigma, 20, a).z == generate_data(fn, truth, sigma, 20, b).z);
}
