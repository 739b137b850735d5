#include "quadcal/proposal.hpp"

#include "quadcal/errors.hpp"
#include "quadcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace quadcal {

namespace {
constexpr Eigen::Index kLeafSize = 8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

NearestNeighborIndex::NearestNeighborIndex(Eigen::MatrixXd anchors) : anchors_(std::move(anchors)) {
  if (anchors_.cols() == 0 || anchors_.rows() == 0) {
    throw std::invalid_argument("NearestNeighborIndex: need at least one anchor");
  }
  if (anchors_.cols() > kBruteForceLimit) {
    order_.resize(static_cast<std::size_t>(anchors_.cols()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    build(0, anchors_.cols());
  }
}

int NearestNeighborIndex::build(Eigen::Index begin, Eigen::Index end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  int axis = 0;
  double spread = -1.0;
  for (Eigen::Index a = 0; a < anchors_.rows(); ++a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index k = begin; k < end; ++k) {
      const double v = anchors_(a, order_[static_cast<std::size_t>(k)]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > spread) {
      spread = hi - lo;
      axis = static_cast<int>(a);
    }
  }
  if (spread <= 0.0) return id;  // all coincide along every axis

  const Eigen::Index mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end, [&](Eigen::Index a, Eigen::Index b) {
    const double va = anchors_(axis, a), vb = anchors_(axis, b);
    return va != vb ? va < vb : a < b;
  });
  const double split = anchors_(axis, order_[static_cast<std::size_t>(mid)]);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

double NearestNeighborIndex::squared_distance(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index k) const {
  double d2 = 0.0;
  for (Eigen::Index a = 0; a < anchors_.rows(); ++a) {
    const double diff = x(a) - anchors_(a, k);
    d2 += diff * diff;
  }
  return d2;
}

void NearestNeighborIndex::search(int id, const Eigen::Ref<const Eigen::VectorXd>& x, double& best_d2,
                                  Eigen::Index& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.axis < 0) {
    for (Eigen::Index p = node.begin; p < node.end; ++p) {
      const Eigen::Index k = order_[static_cast<std::size_t>(p)];
      const double d2 = squared_distance(x, k);
      if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
        best_d2 = d2;
        best = k;
      }
    }
    return;
  }
  const double offset = x(node.axis) - node.split;
  const int near = offset <= 0.0 ? node.left : node.right;
  const int far = offset <= 0.0 ? node.right : node.left;
  search(near, x, best_d2, best);
  // equality still descends so that a lower-index tie can win
  if (offset * offset <= best_d2) search(far, x, best_d2, best);
}

Eigen::Index NearestNeighborIndex::nearest_brute_force(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::Index best = 0;
  double best_d2 = squared_distance(x, 0);
  for (Eigen::Index k = 1; k < anchors_.cols(); ++k) {
    const double d2 = squared_distance(x, k);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

Eigen::Index NearestNeighborIndex::nearest(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != anchors_.rows()) throw std::invalid_argument("nearest: dimension mismatch");
  if (nodes_.empty()) return nearest_brute_force(x);
  double best_d2 = std::numeric_limits<double>::infinity();
  Eigen::Index best = anchors_.cols();
  search(0, x, best_d2, best);
  return best;
}

Eigen::Index nearest_index(const Eigen::MatrixXd& anchors, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return NearestNeighborIndex(anchors).nearest(x);
}

ProposalSurrogate::ProposalSurrogate(Eigen::MatrixXd anchors, Eigen::VectorXd log_likelihoods, PriorBox prior)
    : index_(std::move(anchors)), log_likelihoods_(std::move(log_likelihoods)), prior_(std::move(prior)) {
  if (log_likelihoods_.size() != index_.size()) {
    throw std::invalid_argument("ProposalSurrogate: one log-likelihood per anchor required");
  }
  if (prior_.dimension() != index_.anchors().rows()) {
    throw std::invalid_argument("ProposalSurrogate: prior and anchor dimensions differ");
  }
  max_log_likelihood_ = log_likelihoods_.maxCoeff();
  if (!std::isfinite(max_log_likelihood_)) {
    throw std::invalid_argument("ProposalSurrogate: maximum log-likelihood must be finite");
  }
  for (Eigen::Index k = 0; k < log_likelihoods_.size(); ++k) {
    if (std::isnan(log_likelihoods_(k))) throw std::invalid_argument("ProposalSurrogate: NaN log-likelihood");
  }
  build_envelope();
}

double ProposalSurrogate::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double log_prior = prior_.log_density(x);
  if (log_prior == kNegInf) return kNegInf;
  return log_likelihoods_(index_.nearest(x)) - max_log_likelihood_ + log_prior;
}

double ProposalSurrogate::acceptance_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (!prior_.contains(x)) return 0.0;
  return std::exp(log_likelihoods_(index_.nearest(x)) - max_log_likelihood_);
}

void ProposalSurrogate::build_envelope() {
  const int d = prior_.dimension();
  const Eigen::MatrixXd& anchors = index_.anchors();
  const Eigen::Index n = anchors.cols();
  accept_ = (log_likelihoods_.array() - max_log_likelihood_).exp();
  flat_ = (accept_.array() == 1.0).all();
  if (flat_) return;

  grid_per_axis_ = std::max(1, static_cast<int>(std::floor(std::pow(static_cast<double>(kEnvelopeCells), 1.0 / d) + 1e-9)));
  Eigen::Index cells = 1;
  for (int i = 0; i < d; ++i) cells *= grid_per_axis_;
  cell_width_ = (prior_.upper() - prior_.lower()) / grid_per_axis_;

  cell_bound_.assign(static_cast<std::size_t>(cells), 0.0);
  cumulative_bound_.assign(static_cast<std::size_t>(cells), 0.0);
  candidate_offset_.assign(static_cast<std::size_t>(cells) + 1, 0);
  candidates_.clear();
  std::vector<int> digit(static_cast<std::size_t>(d), 0);
  Eigen::VectorXd lo(d), hi(d), near2(n), far2(n);
  double total = 0.0;
  for (Eigen::Index c = 0; c < cells; ++c) {
    for (int i = 0; i < d; ++i) {
      lo(i) = prior_.lower()(i) + cell_width_(i) * digit[static_cast<std::size_t>(i)];
      hi(i) = digit[static_cast<std::size_t>(i)] + 1 == grid_per_axis_ ? prior_.upper()(i) : lo(i) + cell_width_(i);
    }
    double threshold = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      double a2 = 0.0, b2 = 0.0;
      for (int i = 0; i < d; ++i) {
        const double x = anchors(i, k);
        const double gap = x < lo(i) ? lo(i) - x : (x > hi(i) ? x - hi(i) : 0.0);
        const double reach = std::max(std::abs(x - lo(i)), std::abs(x - hi(i)));
        a2 += gap * gap;
        b2 += reach * reach;
      }
      near2(k) = a2;
      far2(k) = b2;
      threshold = std::min(threshold, b2);
    }
    double bound = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (near2(k) <= threshold) {
        candidates_.push_back(k);
        bound = std::max(bound, accept_(k));
      }
    }
    candidate_offset_[static_cast<std::size_t>(c) + 1] = candidates_.size();
    cell_bound_[static_cast<std::size_t>(c)] = bound;
    total += bound;
    cumulative_bound_[static_cast<std::size_t>(c)] = total;
    for (int i = 0; i < d && ++digit[static_cast<std::size_t>(i)] == grid_per_axis_; ++i) {
      digit[static_cast<std::size_t>(i)] = 0;
    }
  }
}

void ProposalSurrogate::sample_chunk(Eigen::Ref<Eigen::MatrixXd> out, std::uint64_t seed) const {
  Engine engine = make_engine(seed);
  const Eigen::Index count = out.cols();
  const int d = prior_.dimension();
  if (flat_) {
    for (Eigen::Index k = 0; k < count; ++k) out.col(k) = prior_.sample(engine);
    return;
  }
  const Eigen::MatrixXd& anchors = index_.anchors();
  const double total = cumulative_bound_.back();
  double proposals = 0.0;
  Eigen::Index accepted = 0;
  Eigen::VectorXd x(d);
  while (accepted < count) {
    const double pick = uniform01(engine) * total;
    const auto cell = static_cast<std::size_t>(
        std::upper_bound(cumulative_bound_.begin(), cumulative_bound_.end(), pick) - cumulative_bound_.begin());
    std::size_t rest = std::min(cell, cumulative_bound_.size() - 1);
    for (int i = 0; i < d; ++i) {
      const auto digit = static_cast<int>(rest % static_cast<std::size_t>(grid_per_axis_));
      rest /= static_cast<std::size_t>(grid_per_axis_);
      const double lo = prior_.lower()(i) + cell_width_(i) * digit;
      const double hi = digit + 1 == grid_per_axis_ ? prior_.upper()(i) : lo + cell_width_(i);
      x(i) = lo + (hi - lo) * uniform01(engine);
    }
    const std::size_t c = std::min(cell, cumulative_bound_.size() - 1);
    // nearest anchor among the cell's candidates, lowest index on ties
    Eigen::Index best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t p = candidate_offset_[c]; p < candidate_offset_[c + 1]; ++p) {
      const Eigen::Index k = candidates_[p];
      double d2 = 0.0;
      for (int i = 0; i < d; ++i) {
        const double diff = x(i) - anchors(i, k);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    const double u = uniform01(engine);
    proposals += 1.0;
    if (u * cell_bound_[c] < accept_(best)) {
      out.col(accepted++) = x;
    } else if (proposals > kMaxProposalsPerSample * static_cast<double>(accepted + 1)) {
      std::ostringstream msg;
      msg << "surrogate sampling: acceptance rate below 1e-6 (" << accepted << " accepted out of " << proposals
          << " proposals); the surrogate is degenerate relative to the prior box";
      throw SamplingError(msg.str());
    }
  }
}

Eigen::MatrixXd ProposalSurrogate::sample(Eigen::Index count, std::uint64_t seed, int threads) const {
  if (count < 0) throw std::invalid_argument("sample: negative count");
  Eigen::MatrixXd out(prior_.dimension(), count);
  const Eigen::Index chunks = (count + kChunkSize - 1) / kChunkSize;
  auto run = [&](Eigen::Index c) {
    const Eigen::Index begin = c * kChunkSize;
    const Eigen::Index len = std::min(kChunkSize, count - begin);
    sample_chunk(out.middleCols(begin, len), derive_seed(seed, {static_cast<std::uint64_t>(c)}));
  };
  if (threads <= 1 || chunks <= 1) {
    for (Eigen::Index c = 0; c < chunks; ++c) run(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Eigen::Index c = t; c < chunks; c += threads) run(c);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Eigen::MatrixXd sample_prior(const PriorBox& prior, Eigen::Index count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_prior: negative count");
  Eigen::MatrixXd out(prior.dimension(), count);
  const Eigen::Index chunks = (count + ProposalSurrogate::kChunkSize - 1) / ProposalSurrogate::kChunkSize;
  for (Eigen::Index c = 0; c < chunks; ++c) {
    Engine engine = make_engine(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    const Eigen::Index begin = c * ProposalSurrogate::kChunkSize;
    const Eigen::Index len = std::min(ProposalSurrogate::kChunkSize, count - begin);
    for (Eigen::Index k = 0; k < len; ++k) out.col(begin + k) = prior.sample(engine);
  }
  return out;
}

}  // namespace quadcal
