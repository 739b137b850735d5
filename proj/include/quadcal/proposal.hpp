#pragma once

#include "quadcal/bayes.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

namespace quadcal {

/// Euclidean nearest-neighbour queries over a fixed anchor set. Ties go to
/// the lowest anchor index. Small sets are scanned, larger ones use a kd-tree;
/// both paths compute squared distances with the same arithmetic.
class NearestNeighborIndex {
 public:
  static constexpr Eigen::Index kBruteForceLimit = 64;

  NearestNeighborIndex() = default;
  explicit NearestNeighborIndex(Eigen::MatrixXd anchors);

  Eigen::Index size() const { return anchors_.cols(); }
  const Eigen::MatrixXd& anchors() const { return anchors_; }
  Eigen::Index nearest(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::Index nearest_brute_force(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  struct Node {
    Eigen::Index begin = 0, end = 0;  // range in order_
    int axis = -1;                    // -1 for a leaf
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(Eigen::Index begin, Eigen::Index end);
  void search(int node, const Eigen::Ref<const Eigen::VectorXd>& x, double& best_d2, Eigen::Index& best) const;
  double squared_distance(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index k) const;

  Eigen::MatrixXd anchors_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

/// Index of the Euclidean-nearest column of `anchors`, lowest index on ties.
Eigen::Index nearest_index(const Eigen::MatrixXd& anchors, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Nearest-neighbour interpolant of the log-likelihood times the prior:
/// rho_N(x) = exp(ll[nearest(x)] - max ll) q(x).
class ProposalSurrogate {
 public:
  /// Proposals allowed per requested sample before sampling is abandoned
  /// (an acceptance-rate floor of 1e-6).
  static constexpr double kMaxProposalsPerSample = 1e6;
  static constexpr Eigen::Index kChunkSize = 4096;

  ProposalSurrogate(Eigen::MatrixXd anchors, Eigen::VectorXd log_likelihoods, PriorBox prior);

  const Eigen::MatrixXd& anchors() const { return index_.anchors(); }
  const Eigen::VectorXd& log_likelihoods() const { return log_likelihoods_; }
  const PriorBox& prior() const { return prior_; }
  double max_log_likelihood() const { return max_log_likelihood_; }

  Eigen::Index nearest_index(const Eigen::Ref<const Eigen::VectorXd>& x) const { return index_.nearest(x); }
  /// Shifted log density; -inf outside the prior box.
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Acceptance probability of a prior proposal at x.
  double acceptance_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// `count` independent draws (columns). Chunks of kChunkSize samples each
  /// own a stream derived from (seed, chunk), so the result does not depend
  /// on `threads`. Proposals come from the grid envelope rather than the
  /// bare prior; a flat surrogate returns exactly sample_prior(count, seed).
  Eigen::MatrixXd sample(Eigen::Index count, std::uint64_t seed, int threads = 1) const;

 private:
  void build_envelope();
  void sample_chunk(Eigen::Ref<Eigen::MatrixXd> out, std::uint64_t seed) const;

  NearestNeighborIndex index_;
  Eigen::VectorXd log_likelihoods_;
  PriorBox prior_;
  double max_log_likelihood_ = 0.0;

  // Piecewise-constant envelope on a uniform grid over the prior box: each
  // grid cell stores the anchors that can be nearest to one of its points and
  // the largest acceptance among them.
  static constexpr Eigen::Index kEnvelopeCells = 4096;
  Eigen::VectorXd accept_;
  int grid_per_axis_ = 1;
  Eigen::VectorXd cell_width_;
  std::vector<double> cumulative_bound_;
  std::vector<double> cell_bound_;
  std::vector<std::size_t> candidate_offset_;
  std::vector<Eigen::Index> candidates_;
  bool flat_ = false;
};

/// `count` prior draws using the same chunked streams as ProposalSurrogate::sample.
Eigen::MatrixXd sample_prior(const PriorBox& prior, Eigen::Index count, std::uint64_t seed);

}  // namespace quadcal
