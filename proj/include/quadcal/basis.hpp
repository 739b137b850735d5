#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadcal {

/// Exponent tuple of a monomial x_1^e_1 ... x_d^e_d.
struct MultiIndex {
  std::vector<int> exponents;

  int degree() const {
    int total = 0;
    for (int e : exponents) total += e;
    return total;
  }
  std::size_t dimension() const { return exponents.size(); }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;
};

/// Affine map from a bounding box onto [-1,1]^d.
///
/// Evaluating monomials in mapped coordinates is a change of basis of the
/// same polynomial space, so exactness is unaffected while the Vandermonde
/// matrices stay well conditioned on wide boxes.
template <typename Scalar>
struct BoxMap {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector center;
  Vector inv_half_width;

  static BoxMap identity(Eigen::Index d) {
    return {Vector::Zero(d), Vector::Ones(d)};
  }
  static BoxMap from_box(const Vector& lower, const Vector& upper) {
    if (lower.size() != upper.size()) throw std::invalid_argument("BoxMap: bound size mismatch");
    BoxMap map;
    map.center = (lower + upper) / Scalar(2);
    map.inv_half_width = (Scalar(2) / (upper - lower).array()).matrix();
    return map;
  }
  template <typename Derived>
  Vector operator()(const Eigen::MatrixBase<Derived>& x) const {
    return ((x - center).array() * inv_half_width.array()).matrix();
  }
};

/// Graded monomial basis, first `count` multi-indices in the fixed order.
///
/// Within one total degree the tuples appear in descending lexicographic
/// order with the first coordinate most significant, so in two dimensions
/// the sequence reads 1, x, y, x^2, xy, y^2, ...
class MultiIndexBasis {
 public:
  MultiIndexBasis(int dimension, std::size_t count) : dimension_(dimension) {
    if (dimension < 1) throw std::invalid_argument("MultiIndexBasis: dimension must be >= 1");
    if (count < 1) throw std::invalid_argument("MultiIndexBasis: count must be >= 1");
    indices_.reserve(count);
    std::vector<int> scratch(static_cast<std::size_t>(dimension), 0);
    for (int degree = 0; indices_.size() < count; ++degree) {
      append_degree(0, degree, scratch, count);
    }
    build_recurrence();
  }

  int dimension() const { return dimension_; }
  std::size_t size() const { return indices_.size(); }
  /// Highest total degree present (the last index has it).
  int max_degree() const { return indices_.back().degree(); }
  const MultiIndex& operator[](std::size_t j) const { return indices_[j]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }

  /// Number of monomials of total degree <= degree in `dimension` variables.
  static std::size_t full_degree_count(int dimension, int degree) {
    // C(dimension + degree, degree)
    std::size_t result = 1;
    for (int k = 1; k <= degree; ++k) {
      result = result * static_cast<std::size_t>(dimension + k) / static_cast<std::size_t>(k);
    }
    return result;
  }

  /// All basis values at one (already mapped) point, using
  /// phi_j = phi_parent(j) * x_var(j).
  template <typename Scalar, typename Derived, typename OutDerived>
  void evaluate_all(const Eigen::MatrixBase<Derived>& x, Eigen::MatrixBase<OutDerived>& out) const {
    out(0) = Scalar(1);
    for (std::size_t j = 1; j < indices_.size(); ++j) {
      out(static_cast<Eigen::Index>(j)) =
          out(static_cast<Eigen::Index>(parent_[j])) * x(static_cast<Eigen::Index>(variable_[j]));
    }
  }

 private:
  void append_degree(int coord, int remaining, std::vector<int>& scratch, std::size_t count) {
    if (indices_.size() >= count) return;
    if (coord == dimension_ - 1) {
      scratch[static_cast<std::size_t>(coord)] = remaining;
      indices_.push_back(MultiIndex{scratch});
      return;
    }
    for (int e = remaining; e >= 0 && indices_.size() < count; --e) {
      scratch[static_cast<std::size_t>(coord)] = e;
      append_degree(coord + 1, remaining - e, scratch, count);
    }
    scratch[static_cast<std::size_t>(coord)] = 0;
  }

  void build_recurrence() {
    std::map<std::vector<int>, std::size_t> position;
    for (std::size_t j = 0; j < indices_.size(); ++j) position.emplace(indices_[j].exponents, j);
    parent_.assign(indices_.size(), 0);
    variable_.assign(indices_.size(), 0);
    for (std::size_t j = 1; j < indices_.size(); ++j) {
      std::vector<int> e = indices_[j].exponents;
      std::size_t var = 0;
      while (e[var] == 0) ++var;
      --e[var];
      parent_[j] = position.at(e);  // lower degree, and graded order keeps full degree shells
      variable_[j] = var;
    }
  }

  int dimension_;
  std::vector<MultiIndex> indices_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> variable_;
};

template <typename Scalar, typename Derived>
Scalar evaluate_monomial(const MultiIndex& index, const Eigen::MatrixBase<Derived>& point) {
  if (static_cast<Eigen::Index>(index.dimension()) != point.size()) {
    throw std::invalid_argument("evaluate_monomial: dimension mismatch (index " +
                                std::to_string(index.dimension()) + ", point " +
                                std::to_string(point.size()) + ")");
  }
  Scalar value(1);
  for (std::size_t i = 0; i < index.dimension(); ++i) {
    for (int p = 0; p < index.exponents[i]; ++p) value *= point(static_cast<Eigen::Index>(i));
  }
  return value;
}

/// Basis values at one point, after applying `map`.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_column(const MultiIndexBasis& basis,
                                                      const BoxMap<Scalar>& map,
                                                      const Eigen::MatrixBase<Derived>& point) {
  if (point.size() != basis.dimension()) throw std::invalid_argument("basis_column: dimension mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> column(static_cast<Eigen::Index>(basis.size()));
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mapped = map(point);
  basis.evaluate_all<Scalar>(mapped, column);
  return column;
}

/// (D+1) x (N+1) matrix with entry (j,k) = phi_j(x_k); points are columns.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vandermonde(
    const MultiIndexBasis& basis, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& points,
    const BoxMap<Scalar>& map) {
  if (points.cols() == 0) throw std::invalid_argument("vandermonde: empty point list");
  if (points.rows() != basis.dimension()) {
    throw std::invalid_argument("vandermonde: points have dimension " + std::to_string(points.rows()) +
                                ", basis has " + std::to_string(basis.dimension()));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> v(static_cast<Eigen::Index>(basis.size()),
                                                         points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    auto column = v.col(k);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mapped = map(points.col(k));
    basis.evaluate_all<Scalar>(mapped, column);
  }
  return v;
}

/// Raw (unmapped) monomials.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vandermonde(
    const MultiIndexBasis& basis, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& points) {
  return vandermonde<Scalar>(basis, points, BoxMap<Scalar>::identity(basis.dimension()));
}

}  // namespace quadcal
