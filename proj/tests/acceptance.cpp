// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [criterion ...]     (default: all)
#include "quadcal/baselines.hpp"
#include "quadcal/basis.hpp"
#include "quadcal/experiments.hpp"
#include "quadcal/implicit.hpp"
#include "quadcal/random.hpp"
#include "quadcal/univariate.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace quadcal;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Invariants {
  std::size_t runs = 0;
  std::size_t nesting = 0;
  std::size_t cardinality = 0;
  void add(const ConvergenceReport& report) {
    ++runs;
    nesting += report.nesting_violations;
    cardinality += report.cardinality_violations;
  }
};

Invariants g_invariants;

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

ConvergenceReport run_tracked(const RunConfig& config) {
  ConvergenceReport report = run_experiment(config);
  g_invariants.add(report);
  return report;
}

Eigen::MatrixXd vandermonde(const MultiIndexBasis& basis, const BoxMap<double>& map, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd v(basis.size(), x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    Eigen::VectorXd col(basis.size());
    const Eigen::VectorXd y = map(x.col(k));
    basis.evaluate_all<double>(y, col);
    v.col(k) = col;
  }
  return v;
}

// 1. Randomized exactness of the implicit rule against sample moments.
Outcome exactness_suite() {
  Engine engine = make_engine(derive_seed(2024, {1}));
  const int dims[] = {1, 2, 3, 5};
  double worst = 0.0, min_weight = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    const int d = dims[instance % 4];
    const std::size_t count = 1 + static_cast<std::size_t>(uniform01(engine) * 56);
    const Eigen::Index samples_count = 50 * static_cast<Eigen::Index>(count);
    Eigen::VectorXd lower(d), upper(d);
    for (int i = 0; i < d; ++i) {
      lower(i) = -2.0 + 2.0 * uniform01(engine);
      upper(i) = lower(i) + 0.5 + 2.5 * uniform01(engine);
    }
    Eigen::MatrixXd samples(d, samples_count);
    for (Eigen::Index k = 0; k < samples_count; ++k) {
      for (int i = 0; i < d; ++i) samples(i, k) = lower(i) + (upper(i) - lower(i)) * uniform01(engine);
    }
    const MultiIndexBasis basis(d, count);
    ImplicitRuleOptions options;
    options.map = BoxMap<double>::from_box(lower, upper);
    const QuadratureRule rule = construct_implicit_rule(QuadratureRule(), samples, basis, options);

    const Eigen::MatrixXd vs = vandermonde(basis, options.map, samples);
    const Eigen::VectorXd mu = vs.rowwise().mean();
    const Eigen::VectorXd scale = vs.cwiseAbs().rowwise().mean().cwiseMax(mu.cwiseAbs());
    const Eigen::VectorXd got = vandermonde(basis, options.map, rule.nodes()) * rule.weights();
    worst = std::max(worst, ((got - mu).array() / scale.array()).abs().maxCoeff());
    if (rule.size() > 0) min_weight = std::min(min_weight, rule.weights().minCoeff());
  }
  return {worst <= 1e-8 && min_weight >= 0.0,
          fmt("200 instances, max relative moment error %.2e, min weight %.2e", worst, min_weight)};
}

// 3. Exhaustive subset enumeration for tiny univariate instances.
Outcome small_instance_oracle() {
  Engine engine = make_engine(derive_seed(2024, {3}));
  int instances = 0, failures = 0;
  double worst = 0.0;
  for (int samples_count = 1; samples_count <= 8; ++samples_count) {
    for (int degree = 0; degree <= 2 && degree + 1 < samples_count; ++degree) {
      for (int trial = 0; trial < 20; ++trial) {
        ++instances;
        Eigen::MatrixXd samples(1, samples_count);
        for (int k = 0; k < samples_count; ++k) samples(0, k) = uniform01(engine);
        const MultiIndexBasis basis(1, static_cast<std::size_t>(degree + 1));
        const ImplicitRuleOptions options = default_implicit_options(1);
        const QuadratureRule rule = construct_implicit_rule(QuadratureRule(), samples, basis, options);

        const Eigen::MatrixXd v = vandermonde(basis, options.map, samples);
        const Eigen::VectorXd mu = v.rowwise().mean();
        const double residual = (vandermonde(basis, options.map, rule.nodes()) * rule.weights() - mu).cwiseAbs().maxCoeff();
        worst = std::max(worst, residual);

        // support of the returned rule as sample indices
        std::set<int> support;
        for (Eigen::Index j = 0; j < rule.size(); ++j) {
          for (int k = 0; k < samples_count; ++k) {
            if (samples(0, k) == rule.nodes()(0, j) && rule.weights()(j) > 0.0) support.insert(k);
          }
        }
        // all feasible subsets of size <= degree + 1
        std::set<std::set<int>> feasible;
        for (unsigned mask = 1; mask < (1u << samples_count); ++mask) {
          if (std::popcount(mask) > degree + 1) continue;
          std::vector<int> cols;
          for (int k = 0; k < samples_count; ++k) {
            if (mask & (1u << k)) cols.push_back(k);
          }
          Eigen::MatrixXd sub(v.rows(), static_cast<Eigen::Index>(cols.size()));
          for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = v.col(cols[c]);
          const Eigen::VectorXd w = sub.colPivHouseholderQr().solve(mu);
          if ((sub * w - mu).cwiseAbs().maxCoeff() <= 1e-12 && w.minCoeff() >= -1e-12) {
            feasible.insert(std::set<int>(cols.begin(), cols.end()));
          }
        }
        bool support_feasible = false;
        for (const auto& s : feasible) {
          // any feasible subset containing the support (zero weights are allowed in the oracle)
          if (std::includes(s.begin(), s.end(), support.begin(), support.end())) support_feasible = true;
        }
        if (residual > 1e-12 || feasible.empty() || !support_feasible ||
            support.size() > static_cast<std::size_t>(degree + 1)) {
          ++failures;
        }
      }
    }
  }
  return {failures == 0, fmt("%d instances, %d failures, max Vandermonde residual %.2e", instances, failures, worst)};
}

const AggregateRow* final_row(const std::vector<AggregateRow>& rows, const std::string& experiment) {
  const AggregateRow* last = nullptr;
  for (const auto& r : rows) {
    if (r.experiment == experiment) last = &r;
  }
  return last;
}

RunConfig beta_config(std::vector<Eigen::Index> counts, int iterations, bool prior_only) {
  RunConfig c = default_config(Experiment::analytic_beta);
  c.seed = 11;
  c.repeats = 20;
  c.sample_counts = std::move(counts);
  c.schedule = {GrowthSchedule::Kind::linear, 0, 1, iterations};
  c.prior_only = prior_only;
  return c;
}

// 4. Beta analytic case against the quadrature oracle.
Outcome beta_case() {
  const BetaMoments oracle = beta_oracle(40.0, 60.0);
  const bool oracle_ok = std::abs(oracle.mean - 41.0 / 102.0) < 1e-12 && std::abs(oracle.sd - 0.0483) < 5e-4;
  const ConvergenceReport report = run_tracked(beta_config({101, 100001}, 30, false));
  const auto rows = aggregate(report.rows);
  const AggregateRow* large = final_row(rows, "analytic_beta/K=100001");
  const AggregateRow* small = final_row(rows, "analytic_beta/K=101");
  if (!large || !small) return {false, "missing runs"};
  const double bound = 3.0 * oracle.sd / std::sqrt(1e5);
  const double ratio = small->err_adaptive / large->err_adaptive;
  return {oracle_ok && large->D == 30 && large->err_adaptive <= bound && ratio >= 10.0,
          fmt("oracle mean %.15f sd %.5f; K=1e5 final error %.3e (bound %.3e); K=1e2 error %.3e (%.1fx)",
              oracle.mean, oracle.sd, large->err_adaptive, bound, small->err_adaptive, ratio)};
}

// 5. Adaptive proposal versus prior-only rule at matched node counts.
Outcome proposal_benefit() {
  const ConvergenceReport report = run_tracked(beta_config({100001}, 15, true));
  int compared = 0, worse = 0;
  std::ostringstream detail;
  for (const auto& r : aggregate(report.rows)) {
    if (r.mean_N < 5.0 || r.mean_N > 15.0) continue;
    ++compared;
    const double se = std::sqrt(r.se_adaptive * r.se_adaptive + r.se_prior_rule * r.se_prior_rule);
    const bool ok = std::isfinite(r.err_prior_rule) && r.err_adaptive <= r.err_prior_rule + se;
    if (!ok) ++worse;
    detail << fmt(" N=%.1f:%.1e/%.1e", r.mean_N, r.err_adaptive, r.err_prior_rule);
  }
  return {compared > 0 && worse == 0,
          fmt("%d matched counts, %d worse; adaptive/prior errors", compared, worse) + detail.str()};
}

// 6. Genz 2D product peak.
Outcome genz2d_case() {
  RunConfig c = default_config(Experiment::genz2d);
  c.seed = 12;
  c.repeats = 25;
  c.families = {GenzFamily::product_peak};
  c.sample_count = 20001;
  c.oracle_samples = 1000000;
  c.schedule = {GrowthSchedule::Kind::linear, 0, 1, 40};
  const ConvergenceReport report = run_tracked(c);
  const AggregateRow* last = final_row(aggregate(report.rows), "genz2d/product_peak");
  if (!last) return {false, "missing run"};
  const double se = std::sqrt(last->se_adaptive * last->se_adaptive + last->se_prior_rule * last->se_prior_rule);
  return {last->err_adaptive <= last->err_prior_rule + se,
          fmt("final N=%.1f: adaptive %.3e +- %.1e, prior-only %.3e +- %.1e", last->mean_N, last->err_adaptive,
              last->se_adaptive, last->err_prior_rule, last->se_prior_rule)};
}

// 7. Genz 5D error decay under the exponential schedule.
Outcome genz5d_case() {
  RunConfig c = default_config(Experiment::genz5d);
  c.seed = 13;
  c.repeats = 10;
  c.families = {GenzFamily::oscillatory, GenzFamily::product_peak, GenzFamily::corner_peak, GenzFamily::gaussian,
                GenzFamily::discontinuous};
  c.sample_count = 10001;
  c.oracle_samples = 1000000;
  c.schedule = {GrowthSchedule::Kind::exponential, 1, 1, 10};
  c.prior_only = false;
  c.tensor_cc = false;
  c.smolyak = false;
  const ConvergenceReport report = run_tracked(c);
  const auto rows = aggregate(report.rows);
  bool pass = report.positive_weights;
  std::ostringstream detail;
  for (GenzFamily f : c.families) {
    const std::string name = "genz5d/" + to_string(f);
    const AggregateRow* early = nullptr;
    for (const auto& r : rows) {
      if (r.experiment == name && (!early || std::abs(r.mean_N - 10.0) < std::abs(early->mean_N - 10.0))) early = &r;
    }
    const AggregateRow* last = final_row(rows, name);
    if (!early || !last) return {false, "missing run " + name};
    const double factor = early->err_adaptive / last->err_adaptive;
    if (f != GenzFamily::discontinuous && !(factor >= 10.0)) pass = false;
    detail << fmt(" %s %.2e@N=%.0f -> %.2e@N=%.0f (%.1fx);", to_string(f).c_str(), early->err_adaptive,
                  early->mean_N, last->err_adaptive, last->mean_N, factor);
  }
  detail << (report.positive_weights ? " weights positive" : " NEGATIVE WEIGHTS");
  return {pass, detail.str()};
}

// 8. Clenshaw-Curtis and Smolyak sanity.
Outcome baseline_sanity() {
  double cc_worst = 0.0;
  for (int n = 1; n <= 33; ++n) {
    const UnivariateRule rule = clenshaw_curtis(n);
    for (int p = 0; p <= n - 1; ++p) {
      const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
      double got = 0.0;
      for (Eigen::Index k = 0; k < rule.size(); ++k) got += rule.weights(k) * std::pow(rule.nodes(k), p);
      cc_worst = std::max(cc_worst, std::abs(got - exact));
    }
  }
  bool d1_equal = true;
  const PriorBox line = PriorBox::unit(1);
  for (int level = 0; level <= 6; ++level) {
    const QuadratureRule s = smolyak(line, level);
    const QuadratureRule t = tensor_grid(line, {level + 1});
    std::map<double, double> a, b;
    for (Eigen::Index k = 0; k < s.size(); ++k) a[s.nodes()(0, k)] += s.weights()(k);
    for (Eigen::Index k = 0; k < t.size(); ++k) b[t.nodes()(0, k)] += t.weights()(k);
    if (a != b) d1_equal = false;
  }
  Eigen::Vector2d lower(0.0, -1.0), upper(1.0, 2.0);
  const QuadratureRule s2 = smolyak(PriorBox(lower, upper), 2);
  double smolyak_worst = 0.0;
  for (int p = 0; p <= 3; ++p) {
    for (int q = 0; p + q <= 3; ++q) {
      auto average = [](double lo, double hi, int e) {
        return (std::pow(hi, e + 1) - std::pow(lo, e + 1)) / ((e + 1) * (hi - lo));
      };
      const double exact = average(0.0, 1.0, p) * average(-1.0, 2.0, q);
      double got = 0.0;
      for (Eigen::Index k = 0; k < s2.size(); ++k) {
        got += s2.weights()(k) * std::pow(s2.nodes()(0, k), p) * std::pow(s2.nodes()(1, k), q);
      }
      smolyak_worst = std::max(smolyak_worst, std::abs(got - exact));
    }
  }
  return {cc_worst <= 1e-12 && d1_equal && smolyak_worst <= 1e-12,
          fmt("CC max error %.1e; Smolyak d=1 equals CC: %s; Smolyak d=2 level 2 max error %.1e", cc_worst,
              d1_equal ? "yes" : "no", smolyak_worst)};
}

// 9. Calibration pipeline with the builtin toy model.
Outcome calibration_case() {
  RunConfig c = default_config(Experiment::calibrate);
  c.seed = 14;
  const std::size_t basis_count = MultiIndexBasis::full_degree_count(7, 3);
  const ConvergenceReport report = run_tracked(c);
  std::vector<double> e;
  std::size_t final_degree = 0;
  for (const auto& r : report.iterations) {
    e.push_back(r.record.e_N);
    final_degree = r.record.degree;
  }
  if (e.size() < 3) return {false, "too few iterations"};
  bool variance_ok = report.predictive_std.size() == report.locations.size() && report.locations.size() > 0;
  for (Eigen::Index k = 0; k < report.predictive_std.size(); ++k) {
    if (!(report.predictive_std(k) >= 0.0)) variance_ok = false;
  }
  const bool pass = basis_count == 120 && final_degree + 1 == basis_count && e.back() < e[1] && variance_ok;
  return {pass, fmt("basis %zu, final D+1 %zu, e_N second %.3e final %.3e, predictive variances %s", basis_count,
                    final_degree + 1, e[1], e.back(), variance_ok ? "nonnegative" : "INVALID")};
}

// 10. Byte-identical CSV outputs on rerun.
Outcome determinism() {
  namespace fs = std::filesystem;
  std::vector<RunConfig> configs;
  {
    RunConfig c = beta_config({1001}, 8, true);
    c.repeats = 3;
    configs.push_back(c);
  }
  {
    RunConfig c = default_config(Experiment::genz2d);
    c.repeats = 2;
    c.sample_count = 2001;
    c.schedule = {GrowthSchedule::Kind::linear, 0, 1, 6};
    c.tensor_cc = c.smolyak = true;
    configs.push_back(c);
  }
  {
    RunConfig c = default_config(Experiment::genz5d);
    c.repeats = 2;
    c.sample_count = 2001;
    c.schedule = {GrowthSchedule::Kind::exponential, 1, 1, 3};
    c.families = {GenzFamily::gaussian, GenzFamily::discontinuous};
    configs.push_back(c);
  }
  {
    RunConfig c = default_config(Experiment::calibrate);
    c.sample_count = 5001;
    c.schedule = {GrowthSchedule::Kind::linear, 0, 4, 3};
    configs.push_back(c);
  }
  const fs::path root = fs::temp_directory_path() / ("quadcal_determinism_" + std::to_string(::getpid()));
  std::size_t files = 0, differing = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      const fs::path dir = root / std::to_string(i) / std::to_string(pass);
      write_report(configs[i], run_tracked(configs[i]), dir.string());
    }
    for (const auto& entry : fs::directory_iterator(root / std::to_string(i) / "0")) {
      if (entry.path().extension() != ".csv" && entry.path().filename() != "rule.json") continue;
      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
      };
      ++files;
      if (slurp(entry.path()) != slurp(root / std::to_string(i) / "1" / entry.path().filename())) ++differing;
    }
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0, fmt("%zu files compared, %zu differ", files, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id); };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, exactness_suite}, {3, small_instance_oracle}, {4, beta_case},        {5, proposal_benefit},
      {6, genz2d_case},     {7, genz5d_case},           {8, baseline_sanity},  {9, calibration_case},
      {10, determinism},
  };
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!wanted(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << outcome.detail
              << fmt(" [%.1f s]", seconds) << std::endl;
  }
  if (wanted(2)) {
    const bool pass = g_invariants.runs > 0 && g_invariants.nesting == 0 && g_invariants.cardinality == 0;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion 2: "
              << fmt("%zu suites checked, %zu nesting and %zu cardinality violations", g_invariants.runs,
                     g_invariants.nesting, g_invariants.cardinality)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
