#pragma once

#include "quadcal/basis.hpp"
#include "quadcal/rules.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <vector>

namespace quadcal {

/// Sample averages of the basis functions; values(0) == 1.
struct SampleMoments {
  Eigen::VectorXd values;
};

SampleMoments sample_moments(const MultiIndexBasis& basis, const BoxMap<double>& map,
                             const Eigen::MatrixXd& samples);

/// Working state of the node-removal procedure over the extended node list
/// (retained nodes followed by samples).
///
/// The current weights are `weights - accumulated`; `accumulated` stays in
/// the null space of the extended Vandermonde matrix, so the moments never
/// change while columns are driven to zero one at a time.
struct ReductionState {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd accumulated;
  std::vector<bool> active;
  /// Null vectors not used yet, one per column.
  Eigen::MatrixXd pending;
  std::size_t retained_count = 0;

  Eigen::VectorXd current_weights() const { return weights - accumulated; }
  Eigen::Index pending_count() const { return pending.cols(); }
  std::size_t active_count() const;
};

/// Retained nodes with weight 0 followed by samples with weight 1/(K+1).
ReductionState extend_rule(const QuadratureRule& retained, const Eigen::MatrixXd& samples);

/// Unit max-norm vector spanning (part of) the kernel of a wide matrix.
Eigen::VectorXd null_vector(const Eigen::MatrixXd& submatrix);

/// Step length along a null vector and the column it drives to zero.
struct StepChoice {
  double alpha = 0.0;
  Eigen::Index pivot = -1;             ///< local position of the eliminated column
  std::vector<Eigen::Index> zeroed;    ///< local positions hitting zero at alpha
};

/// Picks alpha in {alpha_min, alpha_max} for current weights `current` and
/// direction `direction` (both over the same local columns).
///
/// Preference order: an endpoint that zeroes a sample column
/// (global index >= protect_count), then the endpoint zeroing more columns,
/// then alpha_max. The pivot is the lowest-index sample column among the
/// zeroed ones, or the lowest index if none is a sample.
StepChoice choose_step(const Eigen::VectorXd& current, const Eigen::VectorXd& direction,
                       const std::vector<std::size_t>& global_index, std::size_t protect_count);

/// One elimination with an explicit null vector: updates `accumulated`,
/// zeroes the pivot column exactly, deactivates it and pivot-reduces every
/// pending null vector so the pivot stays at zero afterwards.
ReductionState elimination_step(ReductionState state, const Eigen::VectorXd& null_vec,
                                std::size_t protect_count);

/// Pops the first pending null vector and eliminates with it.
ReductionState elimination_step(ReductionState state, std::size_t protect_count);

struct ImplicitRuleOptions {
  /// Relative residual accepted for null vectors.
  double tol_null = 1e-10;
  /// Relative moment mismatch accepted for the final rule.
  double tol_exact = 1e-8;
  /// Relative residual below which a new column counts as linearly dependent.
  double tol_rank = 1e-10;
  /// Samples closer than this (max-norm) to a retained node or an earlier
  /// sample are dropped. Negative selects 1e-12 * (1 + box diameter).
  double duplicate_tol = -1.0;
  BoxMap<double> map;
  /// Called after every elimination with the current weights over the
  /// extended list (retained, then deduplicated samples). Testing aid.
  std::function<void(const Eigen::VectorXd&)> trace;
};

struct ImplicitRuleStats {
  std::size_t eliminations = 0;
  std::size_t samples_used = 0;       ///< K+1 after deduplication
  std::size_t new_nodes = 0;          ///< sample nodes with nonzero weight
  double moment_residual = 0.0;       ///< ||V w - mu|| / ||mu||
  Eigen::MatrixXd samples;            ///< deduplicated samples
  SampleMoments moments;
};

/// Positive-weight rule containing every retained node (first, in order)
/// plus at most basis.size() sample nodes, matching all sample moments.
///
/// Samples are streamed through an active set of at most D+1 linearly
/// independent columns kept in an updated QR factorization, so each
/// elimination costs O(D^2).
QuadratureRule construct_implicit_rule(const QuadratureRule& retained, const Eigen::MatrixXd& samples,
                                       const MultiIndexBasis& basis, const ImplicitRuleOptions& options,
                                       ImplicitRuleStats* stats = nullptr);

/// Literal dense construction: each null vector comes from the (D+1)x(D+2)
/// submatrix of the largest-weight active columns. O(K^2 D); used as a
/// cross-check for small inputs.
QuadratureRule construct_implicit_rule_dense(const QuadratureRule& retained, const Eigen::MatrixXd& samples,
                                             const MultiIndexBasis& basis, const ImplicitRuleOptions& options,
                                             ImplicitRuleStats* stats = nullptr);

/// Options evaluating raw monomials (identity coordinate map).
inline ImplicitRuleOptions default_implicit_options(int dimension) {
  ImplicitRuleOptions options;
  options.map = BoxMap<double>::identity(dimension);
  return options;
}

}  // namespace quadcal
