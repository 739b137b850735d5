#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace quadcal {

/// Weights in [-kNegativeWeightTolerance, 0) are rounding noise and get
/// clamped to zero; anything more negative is a construction error.
inline constexpr double kNegativeWeightTolerance = 1e-12;

class RuleFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nodes (one per column) and weights of a quadrature rule.
///
/// `evaluated_count` leading nodes carry cached model evaluations;
/// `exactness_count` is the size D+1 of the basis prefix the rule matches.
class QuadratureRule {
 public:
  QuadratureRule() = default;

  /// Validates shapes, clamps rounding-level negative weights and rejects
  /// real negatives unless `signed_weights` is set (Smolyak grids).
  QuadratureRule(Eigen::MatrixXd nodes, Eigen::VectorXd weights, std::size_t exactness_count,
                 std::size_t evaluated_count, bool signed_weights = false);

  Eigen::Index dimension() const { return nodes_.rows(); }
  Eigen::Index size() const { return nodes_.cols(); }
  const Eigen::MatrixXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  auto node(Eigen::Index k) const { return nodes_.col(k); }
  std::size_t exactness_count() const { return exactness_count_; }
  std::size_t evaluated_count() const { return evaluated_count_; }
  bool signed_weights() const { return signed_weights_; }

  /// Copy with weights rescaled to sum to one.
  QuadratureRule normalized() const;

  friend bool operator==(const QuadratureRule& a, const QuadratureRule& b) {
    return a.nodes_.rows() == b.nodes_.rows() && a.nodes_.cols() == b.nodes_.cols() &&
           a.nodes_ == b.nodes_ && a.weights_ == b.weights_ &&
           a.exactness_count_ == b.exactness_count_ && a.evaluated_count_ == b.evaluated_count_ &&
           a.signed_weights_ == b.signed_weights_;
  }

 private:
  Eigen::MatrixXd nodes_;
  Eigen::VectorXd weights_;
  std::size_t exactness_count_ = 0;
  std::size_t evaluated_count_ = 0;
  bool signed_weights_ = false;
};

struct RuleEstimate {
  Eigen::VectorXd value;
  double normalization = 0.0;
};

/// sum_k w_k f(x_k); `values` holds f(x_k) as column k.
RuleEstimate apply(const QuadratureRule& rule, const Eigen::MatrixXd& values);

/// sum_k w_k f(x_k) / sum_k w_k.
Eigen::VectorXd apply_normalized(const QuadratureRule& rule, const Eigen::MatrixXd& values);

/// True iff every node of `coarse` matches a node of `fine` coordinate-wise within tol.
bool is_nested(const QuadratureRule& coarse, const QuadratureRule& fine, double tol);

/// 1e-12 * (1 + diameter of the bounding box of both node sets).
double default_nesting_tolerance(const QuadratureRule& coarse, const QuadratureRule& fine);

/// True if no two nodes coincide exactly.
bool has_distinct_nodes(const Eigen::MatrixXd& nodes);

std::string serialize(const QuadratureRule& rule);
QuadratureRule deserialize(const std::string& text);

void save_rule(const QuadratureRule& rule, const std::string& path);
QuadratureRule load_rule(const std::string& path);

}  // namespace quadcal
