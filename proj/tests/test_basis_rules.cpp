#include "quadcal/basis.hpp"
#include "quadcal/rules.hpp"

#include <doctest.h>

#include <filesystem>
#include <limits>

using namespace quadcal;

namespace {

std::vector<std::vector<int>> exponents(const MultiIndexBasis& basis) {
  std::vector<std::vector<int>> out;
  for (const auto& index : basis.indices()) out.push_back(index.exponents);
  return out;
}

}  // namespace

TEST_CASE("basis enumeration order") {
  CHECK(exponents(MultiIndexBasis(1, 3)) == std::vector<std::vector<int>>{{0}, {1}, {2}});
  CHECK(exponents(MultiIndexBasis(2, 6)) ==
        std::vector<std::vector<int>>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}});
  CHECK(exponents(MultiIndexBasis(3, 1)) == std::vector<std::vector<int>>{{0, 0, 0}});
  CHECK_THROWS(MultiIndexBasis(0, 3));
  CHECK_THROWS(MultiIndexBasis(2, 0));
}

TEST_CASE("basis prefix, grading and uniqueness") {
  for (int d = 1; d <= 4; ++d) {
    const MultiIndexBasis big(d, 80);
    for (std::size_t n = 1; n < 80; ++n) {
      const MultiIndexBasis small(d, n);
      for (std::size_t j = 0; j < n; ++j) REQUIRE(small[j] == big[j]);
    }
    for (std::size_t j = 1; j < big.size(); ++j) {
      CHECK(big[j - 1].degree() <= big[j].degree());
      if (big[j - 1].degree() == big[j].degree()) CHECK(big[j - 1].exponents > big[j].exponents);
    }
  }
  CHECK(MultiIndexBasis::full_degree_count(7, 3) == 120);
  CHECK(MultiIndexBasis::full_degree_count(2, 2) == 6);
}

TEST_CASE("monomial evaluation") {
  CHECK(evaluate_monomial<double>(MultiIndex{{2, 1}}, Eigen::Vector2d(2.0, 3.0)) == 12.0);
  CHECK(evaluate_monomial<double>(MultiIndex{{0, 0}}, Eigen::Vector2d(-4.0, 9.0)) == 1.0);
  CHECK(evaluate_monomial<double>(MultiIndex{{3}}, Eigen::VectorXd::Constant(1, -2.0)) == -8.0);
}

TEST_CASE("vandermonde matrices") {
  Eigen::MatrixXd pts(1, 2);
  pts << 0.0, 1.0;
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 1, 0, 1;
  CHECK(vandermonde<double>(MultiIndexBasis(1, 2), pts) == expected);

  const Eigen::MatrixXd v2 = vandermonde<double>(MultiIndexBasis(2, 3), Eigen::MatrixXd::Zero(2, 1));
  CHECK(v2 == Eigen::Vector3d(1, 0, 0));

  Eigen::MatrixXd p3(1, 3);
  p3 << -1, 0, 1;
  Eigen::MatrixXd e3(3, 3);
  e3 << 1, 1, 1, -1, 0, 1, 1, 0, 1;
  CHECK(vandermonde<double>(MultiIndexBasis(1, 3), p3) == e3);

  const Eigen::MatrixXd p6 = Eigen::RowVectorXd::LinSpaced(6, -1.0, 1.0);
  const Eigen::VectorXd sv = vandermonde<double>(MultiIndexBasis(1, 6), p6).jacobiSvd().singularValues();
  CHECK(sv.minCoeff() > 1e-3);
}

TEST_CASE("box map preserves the monomial span") {
  const Eigen::Vector2d lower(-3.0, 10.0), upper(5.0, 30.0);
  const auto map = BoxMap<double>::from_box(lower, upper);
  CHECK(map(lower).isApprox(Eigen::Vector2d(-1, -1)));
  CHECK(map(upper).isApprox(Eigen::Vector2d(1, 1)));
}

TEST_CASE("apply and apply_normalized") {
  Eigen::MatrixXd nodes(1, 2);
  nodes << 0.0, 1.0;
  const QuadratureRule rule(nodes, Eigen::Vector2d(0.5, 0.5), 1, 2);
  const RuleEstimate e = apply(rule, Eigen::RowVector2d(2.0, 4.0));
  CHECK(e.value(0) == 3.0);
  CHECK(e.normalization == 1.0);
  CHECK(apply(rule, Eigen::RowVector2d(7.0, 7.0)).value(0) == doctest::Approx(7.0));

  const QuadratureRule one(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1), 1, 1);
  CHECK(apply(one, Eigen::MatrixXd::Constant(1, 1, 7.5)).value(0) == 7.5);
  CHECK(apply_normalized(one, Eigen::MatrixXd::Constant(1, 1, -2.0))(0) == -2.0);

  const QuadratureRule twos(nodes, Eigen::Vector2d(2.0, 2.0), 1, 2);
  CHECK(apply_normalized(twos, Eigen::RowVector2d(1.0, 3.0))(0) == 2.0);
  CHECK(apply_normalized(twos, Eigen::RowVector2d(1.0, 1.0))(0) == 1.0);

  const QuadratureRule inert(nodes, Eigen::Vector2d(0.3, 0.0), 1, 2);
  CHECK(apply_normalized(inert, Eigen::RowVector2d(5.0, 100.0))(0) == 5.0);

  // linearity
  const Eigen::RowVector2d f(1.5, -2.0), g(0.25, 4.0);
  CHECK(apply(rule, 2.0 * f + g).value(0) == doctest::Approx(2.0 * apply(rule, f).value(0) + apply(rule, g).value(0)));
}

TEST_CASE("negative weight policy") {
  Eigen::MatrixXd nodes(1, 2);
  nodes << 0.0, 1.0;
  const QuadratureRule clamped(nodes, Eigen::Vector2d(1.0, -5e-13), 1, 2);
  CHECK(clamped.weights()(1) == 0.0);
  CHECK_THROWS(QuadratureRule(nodes, Eigen::Vector2d(1.0, -1e-6), 1, 2));
  CHECK_NOTHROW(QuadratureRule(nodes, Eigen::Vector2d(1.0, -1e-6), 1, 2, true));
  CHECK_THROWS(QuadratureRule(nodes, Eigen::Vector3d(1.0, 1.0, 1.0), 1, 2));
}

TEST_CASE("nesting") {
  Eigen::MatrixXd coarse_nodes(2, 2), fine_nodes(2, 3);
  coarse_nodes << 0.1, 0.2, 0.3, 0.4;
  fine_nodes << 0.1, 0.2, 0.9, 0.3, 0.4, 0.9;
  const QuadratureRule coarse(coarse_nodes, Eigen::Vector2d(0.5, 0.5), 1, 2);
  const QuadratureRule fine(fine_nodes, Eigen::Vector3d(0.2, 0.3, 0.5), 1, 3);
  const double tol = default_nesting_tolerance(coarse, fine);
  CHECK(is_nested(coarse, fine, tol));
  CHECK(is_nested(coarse, coarse, tol));
  Eigen::MatrixXd moved = coarse_nodes;
  moved(0, 1) += 1e-6;
  CHECK_FALSE(is_nested(QuadratureRule(moved, Eigen::Vector2d(0.5, 0.5), 1, 2), fine, tol));
}

TEST_CASE("serialization round trip") {
  Eigen::MatrixXd nodes(2, 3);
  nodes << 0.1, 1.0 / 3.0, std::numeric_limits<double>::min(), -2.5e300, 0.7, 1e-17;
  const QuadratureRule rule(nodes, Eigen::Vector3d(1.0 / 7.0, 0.0, 6.0 / 7.0), 3, 2);
  CHECK(deserialize(serialize(rule)) == rule);
  CHECK_THROWS_AS(deserialize(""), RuleFormatError);
  CHECK_THROWS_AS(deserialize(R"({"dimension":1,"nodes":[[0.5]],"weights":[-0.5],"exactness_count":1,)"
                              R"("evaluated_count":1})"),
                  RuleFormatError);

  const auto path = std::filesystem::temp_directory_path() / "quadcal_rule_roundtrip.json";
  save_rule(rule, path.string());
  CHECK(load_rule(path.string()) == rule);
  std::filesystem::remove(path);
}
