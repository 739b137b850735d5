#include "quadcal/implicit.hpp"

#include "quadcal/errors.hpp"

#include <Eigen/Jacobi>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace quadcal {

namespace {

// Entries of a null vector below this fraction of its max-norm are rounding
// noise of a structural zero.
constexpr double kDirectionNoise = 1e-14;
constexpr double kTieTolerance = 1e-13;

Eigen::VectorXd basis_column_of(const MultiIndexBasis& basis, const BoxMap<double>& map,
                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd column(static_cast<Eigen::Index>(basis.size()));
  const Eigen::VectorXd mapped = map(x);
  basis.evaluate_all<double>(mapped, column);
  return column;
}

double node_diameter(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double diameter = 0.0;
  Eigen::VectorXd lo, hi;
  bool any = false;
  for (const Eigen::MatrixXd* m : {&a, &b}) {
    if (m->cols() == 0) continue;
    if (!any) {
      lo = m->rowwise().minCoeff();
      hi = m->rowwise().maxCoeff();
      any = true;
    } else {
      lo = lo.cwiseMin(m->rowwise().minCoeff());
      hi = hi.cwiseMax(m->rowwise().maxCoeff());
    }
  }
  if (any) diameter = (hi - lo).norm();
  return diameter;
}

// Drops samples within `tol` (max-norm) of a retained node or of an earlier sample.
Eigen::MatrixXd deduplicate(const Eigen::MatrixXd& retained, const Eigen::MatrixXd& samples, double tol) {
  const Eigen::Index r = retained.cols();
  const Eigen::Index total = r + samples.cols();
  auto point = [&](Eigen::Index k) { return k < r ? retained.col(k) : samples.col(k - r); };
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double xa = point(a)(0), xb = point(b)(0);
    return xa != xb ? xa < xb : a < b;
  });
  std::vector<bool> keep(static_cast<std::size_t>(samples.cols()), true);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Eigen::Index k = order[i];
    if (k < r) continue;
    // Compare against every earlier-ranked point in the window; retained
    // nodes always win, among samples the lower index wins.
    for (std::size_t j = i; j-- > 0;) {
      const Eigen::Index other = order[j];
      if (point(k)(0) - point(other)(0) > tol) break;
      const bool other_wins = other < r || (other < k && keep[static_cast<std::size_t>(other - r)]);
      if (other_wins && (point(k) - point(other)).cwiseAbs().maxCoeff() <= tol) {
        keep[static_cast<std::size_t>(k - r)] = false;
        break;
      }
    }
    for (std::size_t j = i + 1; j < order.size() && keep[static_cast<std::size_t>(k - r)]; ++j) {
      const Eigen::Index other = order[j];
      if (point(other)(0) - point(k)(0) > tol) break;
      const bool other_wins = other < r || other < k;
      if (other_wins && (point(k) - point(other)).cwiseAbs().maxCoeff() <= tol) {
        keep[static_cast<std::size_t>(k - r)] = false;
      }
    }
  }
  const auto kept = std::count(keep.begin(), keep.end(), true);
  if (kept == samples.cols()) return samples;
  Eigen::MatrixXd out(samples.rows(), kept);
  Eigen::Index c = 0;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    if (keep[static_cast<std::size_t>(k)]) out.col(c++) = samples.col(k);
  }
  return out;
}

// QR factorization of a growing/shrinking set of at most `rows` columns,
// updated with Givens rotations.
class ActiveSetQR {
 public:
  explicit ActiveSetQR(Eigen::Index rows)
      : q_(Eigen::MatrixXd::Identity(rows, rows)), r_(Eigen::MatrixXd::Zero(rows, rows)) {}

  Eigen::Index rows() const { return q_.rows(); }
  Eigen::Index size() const { return cols_; }

  Eigen::VectorXd project(const Eigen::VectorXd& a) const { return q_.transpose() * a; }

  double residual(const Eigen::VectorXd& projected) const {
    return projected.tail(rows() - cols_).norm();
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& projected) const {
    return r_.topLeftCorner(cols_, cols_).triangularView<Eigen::Upper>().solve(projected.head(cols_));
  }

  // `projected` must be Q^T a for the current Q.
  void append(Eigen::VectorXd projected) {
    for (Eigen::Index i = rows() - 2; i >= cols_; --i) {
      Eigen::JacobiRotation<double> g;
      g.makeGivens(projected(i), projected(i + 1));
      projected.applyOnTheLeft(i, i + 1, g.adjoint());
      projected(i + 1) = 0.0;
      q_.applyOnTheRight(i, i + 1, g);
    }
    r_.col(cols_) = projected;
    ++cols_;
  }

  // Removes column `pos`; `projected` (a Q^T a vector) is rotated along.
  void remove(Eigen::Index pos, Eigen::VectorXd& projected) {
    for (Eigen::Index j = pos; j + 1 < cols_; ++j) r_.col(j) = r_.col(j + 1);
    r_.col(cols_ - 1).setZero();
    --cols_;
    for (Eigen::Index j = pos; j < cols_; ++j) {
      Eigen::JacobiRotation<double> g;
      g.makeGivens(r_(j, j), r_(j + 1, j));
      r_.middleCols(j, cols_ - j).applyOnTheLeft(j, j + 1, g.adjoint());
      r_(j + 1, j) = 0.0;
      q_.applyOnTheRight(j, j + 1, g);
      projected.applyOnTheLeft(j, j + 1, g.adjoint());
    }
  }

 private:
  Eigen::MatrixXd q_;
  Eigen::MatrixXd r_;
  Eigen::Index cols_ = 0;
};

void require_samples(const MultiIndexBasis& basis, Eigen::Index sample_count) {
  if (sample_count <= static_cast<Eigen::Index>(basis.size())) {
    throw std::invalid_argument("construct_implicit_rule: insufficient samples (" +
                                std::to_string(sample_count) + " distinct samples for " +
                                std::to_string(basis.size()) + " basis functions)");
  }
}

// Zeroes entries of `current` that the step drove below zero by rounding.
void clamp_weights(Eigen::VectorXd& current) {
  for (Eigen::Index k = 0; k < current.size(); ++k) {
    if (current(k) < 0.0) {
      if (current(k) < -kNegativeWeightTolerance) {
        throw NumericalError("implicit rule: weight " + std::to_string(current(k)) +
                             " became negative during elimination");
      }
      current(k) = 0.0;
    }
  }
}

QuadratureRule assemble_rule(const QuadratureRule& retained, const Eigen::MatrixXd& samples,
                             const std::vector<std::size_t>& support, const Eigen::VectorXd& support_weights,
                             std::size_t exactness_count, std::size_t* new_nodes) {
  const auto r = static_cast<std::size_t>(retained.size());
  Eigen::VectorXd retained_weights = Eigen::VectorXd::Zero(retained.size());
  std::vector<std::pair<std::size_t, double>> chosen;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const double w = support_weights(static_cast<Eigen::Index>(i));
    if (support[i] < r) {
      retained_weights(static_cast<Eigen::Index>(support[i])) = w;
    } else if (w > 0.0) {
      chosen.emplace_back(support[i] - r, w);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  const Eigen::Index d = samples.rows();
  Eigen::MatrixXd nodes(d, retained.size() + static_cast<Eigen::Index>(chosen.size()));
  Eigen::VectorXd weights(nodes.cols());
  if (retained.size() > 0) {
    nodes.leftCols(retained.size()) = retained.nodes();
    weights.head(retained.size()) = retained_weights;
  }
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const Eigen::Index c = retained.size() + static_cast<Eigen::Index>(i);
    nodes.col(c) = samples.col(static_cast<Eigen::Index>(chosen[i].first));
    weights(c) = chosen[i].second;
  }
  if (new_nodes) *new_nodes = chosen.size();
  return QuadratureRule(std::move(nodes), std::move(weights), exactness_count,
                        static_cast<std::size_t>(retained.size()));
}

double relative_moment_residual(const QuadratureRule& rule, const MultiIndexBasis& basis,
                                const BoxMap<double>& map, const SampleMoments& moments) {
  Eigen::VectorXd reproduced = Eigen::VectorXd::Zero(moments.values.size());
  for (Eigen::Index k = 0; k < rule.size(); ++k) {
    if (rule.weights()(k) != 0.0) reproduced += rule.weights()(k) * basis_column_of(basis, map, rule.node(k));
  }
  return (reproduced - moments.values).norm() / moments.values.norm();
}

double resolve_duplicate_tol(const ImplicitRuleOptions& options, const QuadratureRule& retained,
                             const Eigen::MatrixXd& samples) {
  if (options.duplicate_tol >= 0.0) return options.duplicate_tol;
  return 1e-12 * (1.0 + node_diameter(retained.nodes(), samples));
}

void check_inputs(const QuadratureRule& retained, const Eigen::MatrixXd& samples, const MultiIndexBasis& basis,
                  const ImplicitRuleOptions& options) {
  if (samples.cols() == 0) throw std::invalid_argument("construct_implicit_rule: empty sample set");
  if (samples.rows() != basis.dimension()) {
    throw std::invalid_argument("construct_implicit_rule: samples have dimension " +
                                std::to_string(samples.rows()) + ", basis " + std::to_string(basis.dimension()));
  }
  if (retained.size() > 0 && retained.dimension() != samples.rows()) {
    throw std::invalid_argument("construct_implicit_rule: retained rule dimension mismatch");
  }
  if (retained.evaluated_count() != static_cast<std::size_t>(retained.size())) {
    throw std::invalid_argument("construct_implicit_rule: retained nodes must all carry model evaluations");
  }
  if (options.map.center.size() != samples.rows()) {
    throw std::invalid_argument("construct_implicit_rule: coordinate map dimension mismatch");
  }
}

}  // namespace

std::size_t ReductionState::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

SampleMoments sample_moments(const MultiIndexBasis& basis, const BoxMap<double>& map,
                             const Eigen::MatrixXd& samples) {
  if (samples.cols() == 0) throw std::invalid_argument("sample_moments: empty sample set");
  if (samples.rows() != basis.dimension()) throw std::invalid_argument("sample_moments: dimension mismatch");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  Eigen::VectorXd column(sum.size());
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    const Eigen::VectorXd mapped = map(samples.col(k));
    basis.evaluate_all<double>(mapped, column);
    sum += column;
  }
  sum /= static_cast<double>(samples.cols());
  sum(0) = 1.0;
  return {sum};
}

ReductionState extend_rule(const QuadratureRule& retained, const Eigen::MatrixXd& samples) {
  if (samples.cols() == 0) throw std::invalid_argument("extend_rule: empty sample set");
  ReductionState state;
  state.retained_count = static_cast<std::size_t>(retained.size());
  state.nodes.resize(samples.rows(), retained.size() + samples.cols());
  if (retained.size() > 0) state.nodes.leftCols(retained.size()) = retained.nodes();
  state.nodes.rightCols(samples.cols()) = samples;
  state.weights = Eigen::VectorXd::Zero(state.nodes.cols());
  state.weights.tail(samples.cols()).setConstant(1.0 / static_cast<double>(samples.cols()));
  state.accumulated = Eigen::VectorXd::Zero(state.nodes.cols());
  state.active.assign(static_cast<std::size_t>(state.nodes.cols()), true);
  state.pending.resize(state.nodes.cols(), 0);
  return state;
}

Eigen::VectorXd null_vector(const Eigen::MatrixXd& submatrix) {
  if (submatrix.cols() <= submatrix.rows()) {
    throw std::invalid_argument("null_vector: matrix must have more columns than rows");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(submatrix, Eigen::ComputeFullV);
  Eigen::VectorXd v = svd.matrixV().col(submatrix.cols() - 1);
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  return v / v(arg);
}

StepChoice choose_step(const Eigen::VectorXd& current, const Eigen::VectorXd& direction,
                       const std::vector<std::size_t>& global_index, std::size_t protect_count) {
  const double noise = kDirectionNoise * direction.cwiseAbs().maxCoeff();
  constexpr double inf = std::numeric_limits<double>::infinity();
  double alpha_max = inf, alpha_min = -inf;
  for (Eigen::Index k = 0; k < direction.size(); ++k) {
    if (direction(k) > noise) alpha_max = std::min(alpha_max, current(k) / direction(k));
    if (direction(k) < -noise) alpha_min = std::max(alpha_min, current(k) / direction(k));
  }
  if (alpha_max == inf && alpha_min == -inf) {
    throw NumericalError("elimination step: null vector has no support on active columns");
  }

  struct Endpoint {
    double alpha;
    std::vector<Eigen::Index> zeroed;
    bool hits_sample = false;
  };
  auto collect = [&](double alpha, double sign) {
    Endpoint e{alpha, {}, false};
    if (!std::isfinite(alpha)) return e;
    for (Eigen::Index k = 0; k < direction.size(); ++k) {
      if (sign * direction(k) <= noise) continue;
      const double ratio = current(k) / direction(k);
      if (std::abs(ratio - alpha) <= kTieTolerance * std::abs(alpha)) {
        e.zeroed.push_back(k);
        if (global_index[static_cast<std::size_t>(k)] >= protect_count) e.hits_sample = true;
      }
    }
    return e;
  };
  Endpoint upper = collect(alpha_max, 1.0);
  Endpoint lower = collect(alpha_min, -1.0);

  auto better = [](const Endpoint& a, const Endpoint& b) {
    // true if a is strictly preferred over b
    if (a.zeroed.empty() != b.zeroed.empty()) return !a.zeroed.empty();
    if (a.hits_sample != b.hits_sample) return a.hits_sample;
    return a.zeroed.size() > b.zeroed.size();
  };
  const Endpoint& pick = better(lower, upper) ? lower : upper;

  StepChoice choice;
  choice.alpha = pick.alpha;
  choice.zeroed = pick.zeroed;
  std::size_t best_global = std::numeric_limits<std::size_t>::max();
  for (Eigen::Index k : pick.zeroed) {
    const std::size_t g = global_index[static_cast<std::size_t>(k)];
    if (pick.hits_sample && g < protect_count) continue;
    if (g < best_global) {
      best_global = g;
      choice.pivot = k;
    }
  }
  return choice;
}

ReductionState elimination_step(ReductionState state, const Eigen::VectorXd& null_vec,
                                 std::size_t protect_count) {
  if (null_vec.size() != state.weights.size()) throw std::invalid_argument("elimination_step: size mismatch");
  std::vector<std::size_t> columns;
  for (std::size_t k = 0; k < state.active.size(); ++k) {
    if (state.active[k]) columns.push_back(k);
  }
  const auto n = static_cast<Eigen::Index>(columns.size());
  Eigen::VectorXd current(n), direction(n);
  const Eigen::VectorXd all_current = state.current_weights();
  for (Eigen::Index i = 0; i < n; ++i) {
    current(i) = all_current(static_cast<Eigen::Index>(columns[static_cast<std::size_t>(i)]));
    direction(i) = null_vec(static_cast<Eigen::Index>(columns[static_cast<std::size_t>(i)]));
  }
  const StepChoice choice = choose_step(current, direction, columns, protect_count);

  Eigen::VectorXd updated = current - choice.alpha * direction;
  for (Eigen::Index k : choice.zeroed) updated(k) = 0.0;
  clamp_weights(updated);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto g = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(i)]);
    state.accumulated(g) = state.weights(g) - updated(i);
  }
  const auto pivot = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(choice.pivot)]);
  state.accumulated(pivot) = state.weights(pivot);
  state.active[static_cast<std::size_t>(pivot)] = false;

  // Gaussian reduction with pivot null_vec(pivot).
  for (Eigen::Index j = 0; j < state.pending.cols(); ++j) {
    const double factor = state.pending(pivot, j) / null_vec(pivot);
    state.pending.col(j) -= factor * null_vec;
    state.pending(pivot, j) = 0.0;
  }
  return state;
}

ReductionState elimination_step(ReductionState state, std::size_t protect_count) {
  if (state.pending.cols() == 0) throw std::invalid_argument("elimination_step: no pending null vectors");
  const Eigen::VectorXd first = state.pending.col(0);
  Eigen::MatrixXd rest = state.pending.rightCols(state.pending.cols() - 1);
  state.pending = std::move(rest);
  return elimination_step(std::move(state), first, protect_count);
}

QuadratureRule construct_implicit_rule(const QuadratureRule& retained, const Eigen::MatrixXd& raw_samples,
                                       const MultiIndexBasis& basis, const ImplicitRuleOptions& options,
                                       ImplicitRuleStats* stats) {
  check_inputs(retained, raw_samples, basis, options);
  const Eigen::MatrixXd samples =
      deduplicate(retained.nodes(), raw_samples, resolve_duplicate_tol(options, retained, raw_samples));
  require_samples(basis, samples.cols());

  const auto m = static_cast<Eigen::Index>(basis.size());
  const auto r = static_cast<std::size_t>(retained.size());
  const auto s = static_cast<std::size_t>(samples.cols());
  const double sample_weight = 1.0 / static_cast<double>(s);
  const SampleMoments moments = sample_moments(basis, options.map, samples);

  // Stream order: enough samples to fill the active set with positive
  // weights, then the retained nodes, then the remaining samples.
  std::vector<std::size_t> order;
  order.reserve(r + s);
  const std::size_t head = std::min<std::size_t>(s, static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < head; ++k) order.push_back(r + k);
  for (std::size_t k = 0; k < r; ++k) order.push_back(k);
  for (std::size_t k = head; k < s; ++k) order.push_back(r + k);

  auto point = [&](std::size_t g) {
    return g < r ? Eigen::VectorXd(retained.node(static_cast<Eigen::Index>(g)))
                 : Eigen::VectorXd(samples.col(static_cast<Eigen::Index>(g - r)));
  };

  Eigen::VectorXd extended;
  if (options.trace) {
    extended = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r + s));
    extended.tail(static_cast<Eigen::Index>(s)).setConstant(sample_weight);
  }

  ActiveSetQR qr(m);
  std::vector<std::size_t> support;
  std::vector<double> support_weights;
  support.reserve(static_cast<std::size_t>(m) + 1);
  support_weights.reserve(static_cast<std::size_t>(m) + 1);
  std::size_t eliminations = 0;

  for (std::size_t g : order) {
    const double initial = g < r ? 0.0 : sample_weight;
    const Eigen::VectorXd column = basis_column_of(basis, options.map, point(g));
    Eigen::VectorXd projected = qr.project(column);
    const Eigen::Index p = qr.size();
    if (p < m && qr.residual(projected) > options.tol_rank * column.norm()) {
      qr.append(std::move(projected));
      support.push_back(g);
      support_weights.push_back(initial);
      continue;
    }

    // Dependent column: (x, -1) is a null vector of [V_support, column]
    // with relative residual at most tol_rank.
    const Eigen::VectorXd x = qr.solve(projected);
    Eigen::VectorXd current(p + 1), direction(p + 1);
    for (Eigen::Index i = 0; i < p; ++i) current(i) = support_weights[static_cast<std::size_t>(i)];
    current(p) = initial;
    direction.head(p) = x;
    direction(p) = -1.0;
    support.push_back(g);

    const StepChoice choice = choose_step(current, direction, support, r);
    Eigen::VectorXd updated = current - choice.alpha * direction;
    for (Eigen::Index k : choice.zeroed) updated(k) = 0.0;
    clamp_weights(updated);
    ++eliminations;

    if (options.trace) {
      for (Eigen::Index i = 0; i <= p; ++i) extended(static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)])) = updated(i);
    }

    if (choice.pivot == p) {
      support.pop_back();
      for (Eigen::Index i = 0; i < p; ++i) support_weights[static_cast<std::size_t>(i)] = updated(i);
    } else {
      qr.remove(choice.pivot, projected);
      qr.append(std::move(projected));
      support.erase(support.begin() + choice.pivot);
      support_weights.clear();
      for (Eigen::Index i = 0; i <= p; ++i) {
        if (i != choice.pivot) support_weights.push_back(updated(i));
      }
    }
    if (options.trace) options.trace(extended);
  }

  Eigen::VectorXd weights = Eigen::Map<Eigen::VectorXd>(support_weights.data(),
                                                        static_cast<Eigen::Index>(support_weights.size()));

  // Polish accumulated rounding with a least-squares correction on the
  // support, kept only while it preserves non-negativity.
  {
    Eigen::MatrixXd vs(m, static_cast<Eigen::Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i) {
      vs.col(static_cast<Eigen::Index>(i)) = basis_column_of(basis, options.map, point(support[i]));
    }
    for (int round = 0; round < 2; ++round) {
      const Eigen::VectorXd residual = moments.values - vs * weights;
      if (residual.norm() <= 1e-15 * moments.values.norm()) break;
      Eigen::VectorXd corrected = weights + qr.solve(qr.project(residual));
      bool admissible = true;
      for (Eigen::Index k = 0; k < corrected.size(); ++k) {
        if (corrected(k) < 0.0) {
          if (corrected(k) < -kNegativeWeightTolerance) admissible = false;
          corrected(k) = 0.0;
        }
      }
      if (!admissible) break;
      weights = corrected;
    }
  }

  std::size_t new_nodes = 0;
  QuadratureRule rule = assemble_rule(retained, samples, support, weights, basis.size(), &new_nodes);
  const double residual = relative_moment_residual(rule, basis, options.map, moments);
  if (!(residual <= options.tol_exact)) {
    throw NumericalError("implicit rule: relative moment mismatch " + std::to_string(residual) +
                         " exceeds tolerance");
  }
  if (stats) {
    stats->eliminations = eliminations;
    stats->samples_used = s;
    stats->new_nodes = new_nodes;
    stats->moment_residual = residual;
    stats->samples = samples;
    stats->moments = moments;
  }
  return rule;
}

QuadratureRule construct_implicit_rule_dense(const QuadratureRule& retained, const Eigen::MatrixXd& raw_samples,
                                             const MultiIndexBasis& basis, const ImplicitRuleOptions& options,
                                             ImplicitRuleStats* stats) {
  check_inputs(retained, raw_samples, basis, options);
  const Eigen::MatrixXd samples =
      deduplicate(retained.nodes(), raw_samples, resolve_duplicate_tol(options, retained, raw_samples));
  require_samples(basis, samples.cols());
  const auto m = static_cast<Eigen::Index>(basis.size());
  const auto r = static_cast<std::size_t>(retained.size());
  const SampleMoments moments = sample_moments(basis, options.map, samples);

  ReductionState state = extend_rule(retained, samples);
  const Eigen::MatrixXd v = vandermonde<double>(basis, state.nodes, options.map);
  const Eigen::Index total = state.nodes.cols();
  const Eigen::Index steps = total - m;  // J, assuming full row rank
  std::size_t eliminations = 0;

  for (Eigen::Index step = 0; step < steps; ++step) {
    const Eigen::VectorXd current = state.current_weights();
    std::vector<Eigen::Index> columns;
    for (Eigen::Index k = 0; k < total; ++k) {
      if (state.active[static_cast<std::size_t>(k)]) columns.push_back(k);
    }
    if (static_cast<Eigen::Index>(columns.size()) < m + 1) break;
    std::stable_sort(columns.begin(), columns.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return current(a) > current(b); });
    columns.resize(static_cast<std::size_t>(m + 1));
    std::sort(columns.begin(), columns.end());

    Eigen::MatrixXd sub(m, m + 1);
    for (Eigen::Index i = 0; i <= m; ++i) sub.col(i) = v.col(columns[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd local = null_vector(sub);
    if ((sub * local).norm() > options.tol_null * sub.norm() * local.norm()) {
      throw NumericalError("implicit rule (dense): null vector residual exceeds tolerance");
    }
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(total);
    for (Eigen::Index i = 0; i <= m; ++i) padded(columns[static_cast<std::size_t>(i)]) = local(i);
    state = elimination_step(std::move(state), padded, r);
    ++eliminations;
    if (options.trace) options.trace(state.current_weights());
  }

  std::vector<std::size_t> support;
  std::vector<double> support_weights;
  const Eigen::VectorXd current = state.current_weights();
  for (Eigen::Index k = 0; k < total; ++k) {
    if (state.active[static_cast<std::size_t>(k)] || static_cast<std::size_t>(k) < r) {
      support.push_back(static_cast<std::size_t>(k));
      support_weights.push_back(current(k));
    }
  }
  std::size_t new_nodes = 0;
  QuadratureRule rule = assemble_rule(
      retained, samples, support,
      Eigen::Map<Eigen::VectorXd>(support_weights.data(), static_cast<Eigen::Index>(support_weights.size())),
      basis.size(), &new_nodes);
  const double residual = relative_moment_residual(rule, basis, options.map, moments);
  if (!(residual <= options.tol_exact)) {
    throw NumericalError("implicit rule (dense): relative moment mismatch " + std::to_string(residual));
  }
  if (stats) {
    stats->eliminations = eliminations;
    stats->samples_used = static_cast<std::size_t>(samples.cols());
    stats->new_nodes = new_nodes;
    stats->moment_residual = residual;
    stats->samples = samples;
    stats->moments = moments;
  }
  return rule;
}

}  // namespace quadcal
