#include "quadcal/experiments.hpp"

#include "quadcal/baselines.hpp"
#include "quadcal/errors.hpp"
#include "quadcal/proposal.hpp"
#include "quadcal/random.hpp"
#include "quadcal/subprocess_model.hpp"
#include "quadcal/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace quadcal {

namespace {

using json = nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::pair<Experiment, const char*> kExperimentNames[] = {
    {Experiment::analytic_beta, "analytic_beta"}, {Experiment::genz2d, "genz2d"},     {Experiment::genz5d, "genz5d"},
    {Experiment::genz_dim, "genz_dim"},           {Experiment::calibrate, "calibrate"},
};

std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Runs fn(i) for i < count on up to `threads` workers; results keep index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(int count, int threads, Fn fn) {
  std::vector<T> out(static_cast<std::size_t>(count));
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = fn(i);
    return out;
  }
  const int workers = std::min(threads, count);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += workers) out[static_cast<std::size_t>(i)] = fn(i);
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

double max_abs_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  return (estimate - truth).cwiseAbs().maxCoeff();
}

// --- config parsing -------------------------------------------------------

void reject_unknown(const json& object, const std::set<std::string>& allowed, const std::string& where) {
  if (!object.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = object.begin(); it != object.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
T get(const json& object, const std::string& key, const std::string& where) {
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

Eigen::VectorXd get_vector(const json& object, const std::string& key, const std::string& where) {
  const auto values = get<std::vector<double>>(object, key, where);
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

GrowthSchedule parse_schedule(const json& j, GrowthSchedule schedule) {
  reject_unknown(j, {"kind", "base", "step", "max_iterations"}, "schedule");
  if (j.contains("kind")) {
    const auto kind = get<std::string>(j, "kind", "schedule");
    if (kind == "linear") {
      schedule.kind = GrowthSchedule::Kind::linear;
    } else if (kind == "exponential") {
      schedule.kind = GrowthSchedule::Kind::exponential;
    } else {
      throw ConfigError("schedule.kind: expected \"linear\" or \"exponential\"");
    }
  }
  if (j.contains("base")) schedule.base = get<std::size_t>(j, "base", "schedule");
  if (j.contains("step")) schedule.step = get<std::size_t>(j, "step", "schedule");
  if (j.contains("max_iterations")) schedule.max_iterations = get<int>(j, "max_iterations", "schedule");
  return schedule;
}

}  // namespace

std::string to_string(Experiment experiment) {
  for (const auto& [e, name] : kExperimentNames) {
    if (e == experiment) return name;
  }
  return "unknown";
}

std::optional<Experiment> parse_experiment(const std::string& name) {
  for (const auto& [e, n] : kExperimentNames) {
    if (name == n) return e;
  }
  return std::nullopt;
}

PriorBox toy_cp_prior() {
  Eigen::VectorXd lower(7), upper(7);
  // kappa, sigma, c_b1, c_b2, c_v1, c_w2, c_w3
  lower << 0.205, 1.0 / 3.0, 0.0678, 0.311, 3.55, 0.2, 1.0;
  upper << 0.615, 1.0, 0.2033, 0.933, 10.65, 0.4, 3.0;
  return PriorBox(lower, upper);
}

Eigen::VectorXd toy_cp_truth() {
  Eigen::VectorXd truth(7);
  truth << 0.41, 2.0 / 3.0, 0.1355, 0.622, 7.1, 0.3, 2.0;
  return truth;
}

Eigen::VectorXd toy_cp_model(const Eigen::VectorXd& theta, const Eigen::VectorXd& locations) {
  if (theta.size() != 7) throw std::invalid_argument("toy_cp_model: expects 7 parameters");
  const PriorBox prior = toy_cp_prior();
  const Eigen::ArrayXd t =
      (theta - prior.lower()).array() / (prior.upper() - prior.lower()).array() - 0.5;
  const double pi = std::numbers::pi;
  Eigen::VectorXd out(locations.size());
  for (Eigen::Index k = 0; k < locations.size(); ++k) {
    const double s = locations(k);
    const double shape = 0.6 * std::cos(pi * s) - 0.3 * s * (2.0 - s);
    const double shock = std::tanh(8.0 * (s - 1.35 - 0.08 * t(0) + 0.04 * t(4)));
    out(k) = shape - 0.25 * shock * (1.0 + 0.3 * t(1)) + 0.05 * t(2) * std::sin(pi * s) +
             0.04 * t(3) * std::cos(0.5 * pi * s) + 0.03 * t(5) * t(6) * s * (2.0 - s) +
             0.02 * t(6) * std::exp(-4.0 * (s - 0.5) * (s - 0.5));
  }
  return out;
}

RunConfig default_config(Experiment experiment) {
  RunConfig c;
  c.experiment = experiment;
  switch (experiment) {
    case Experiment::analytic_beta:
      c.schedule = {GrowthSchedule::Kind::linear, 0, 1, 30};
      c.sample_count = 100000;
      c.sample_counts = {100, 1000, 10000, 100000};
      c.repeats = 50;
      break;
    case Experiment::genz2d:
      c.schedule = {GrowthSchedule::Kind::linear, 0, 1, 65};
      c.repeats = 25;
      c.dimension = 2;
      c.families = {GenzFamily::product_peak, GenzFamily::c0, GenzFamily::discontinuous};
      break;
    case Experiment::genz5d:
      c.schedule = {GrowthSchedule::Kind::exponential, 1, 1, 10};
      c.repeats = 25;
      c.dimension = 5;
      c.tensor_cc = true;
      c.smolyak = true;
      c.families = {GenzFamily::oscillatory, GenzFamily::product_peak, GenzFamily::corner_peak,
                    GenzFamily::gaussian,    GenzFamily::c0,           GenzFamily::discontinuous};
      break;
    case Experiment::genz_dim:
      c.schedule = {GrowthSchedule::Kind::linear, 0, 1, 20};
      c.repeats = 100;
      c.prior_only = false;
      c.dimensions = {2, 3, 4, 5, 6, 7, 8, 9, 10};
      c.families = {GenzFamily::oscillatory, GenzFamily::product_peak, GenzFamily::corner_peak,
                    GenzFamily::gaussian,    GenzFamily::c0,           GenzFamily::discontinuous};
      break;
    case Experiment::calibrate:
      // 7 iterations of 17 reach D = 119, the 120 polynomials of degree <= 3 in 7 variables.
      c.schedule = {GrowthSchedule::Kind::linear, 0, 17, 7};
      c.repeats = 1;
      c.prior_only = false;
      c.calibration.model.builtin = "toy_cp";
      c.calibration.prior = toy_cp_prior();
      c.calibration.truth = toy_cp_truth();
      c.calibration.likelihood.locations = Eigen::VectorXd::LinSpaced(40, 0.025, 1.975);
      break;
  }
  return c;
}

RunConfig parse_run_config(const json& j, std::optional<Experiment> experiment) {
  reject_unknown(j, {"experiment", "seed", "repeats", "sample_count", "sample_counts", "output_dir", "tol_exact",
                     "threads", "schedule", "baselines", "beta", "genz", "model", "prior", "likelihood", "data",
                     "truth"},
                 "config");
  if (!experiment) {
    if (!j.contains("experiment")) throw ConfigError("config: missing \"experiment\"");
    experiment = parse_experiment(get<std::string>(j, "experiment", "config"));
    if (!experiment) throw ConfigError("config.experiment: unknown experiment");
  } else if (j.contains("experiment") && parse_experiment(get<std::string>(j, "experiment", "config")) != experiment) {
    throw ConfigError("config.experiment does not match the requested experiment");
  }
  RunConfig c = default_config(*experiment);
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("repeats")) c.repeats = get<int>(j, "repeats", "config");
  if (j.contains("sample_count")) {
    c.sample_count = get<Eigen::Index>(j, "sample_count", "config");
    if (!j.contains("sample_counts")) c.sample_counts.clear();
  }
  if (j.contains("sample_counts")) c.sample_counts = get<std::vector<Eigen::Index>>(j, "sample_counts", "config");
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir", "config");
  if (j.contains("tol_exact")) c.tol_exact = get<double>(j, "tol_exact", "config");
  if (j.contains("threads")) c.threads = get<int>(j, "threads", "config");
  if (j.contains("schedule")) c.schedule = parse_schedule(j["schedule"], c.schedule);
  if (j.contains("baselines")) {
    const json& b = j["baselines"];
    reject_unknown(b, {"prior_only", "tensor_cc", "smolyak"}, "baselines");
    if (b.contains("prior_only")) c.prior_only = get<bool>(b, "prior_only", "baselines");
    if (b.contains("tensor_cc")) c.tensor_cc = get<bool>(b, "tensor_cc", "baselines");
    if (b.contains("smolyak")) c.smolyak = get<bool>(b, "smolyak", "baselines");
  }
  if (j.contains("beta")) {
    const json& b = j["beta"];
    reject_unknown(b, {"alpha", "beta"}, "beta");
    if (b.contains("alpha")) c.beta_alpha = get<double>(b, "alpha", "beta");
    if (b.contains("beta")) c.beta_beta = get<double>(b, "beta", "beta");
  }
  if (j.contains("genz")) {
    const json& g = j["genz"];
    reject_unknown(g, {"families", "dimension", "dimensions", "scale", "measurements", "noise_variance",
                       "oracle_samples"},
                   "genz");
    if (g.contains("families")) {
      c.families.clear();
      for (const auto& name : get<std::vector<std::string>>(g, "families", "genz")) {
        const auto family = parse_genz_family(name);
        if (!family) throw ConfigError("genz.families: unknown family \"" + name + "\"");
        c.families.push_back(*family);
      }
    }
    if (g.contains("dimension")) c.dimension = get<int>(g, "dimension", "genz");
    if (g.contains("dimensions")) c.dimensions = get<std::vector<int>>(g, "dimensions", "genz");
    if (g.contains("scale")) c.genz_scale = get<double>(g, "scale", "genz");
    if (g.contains("measurements")) c.measurements = get<int>(g, "measurements", "genz");
    if (g.contains("noise_variance")) c.noise_variance = get<double>(g, "noise_variance", "genz");
    if (g.contains("oracle_samples")) c.oracle_samples = get<Eigen::Index>(g, "oracle_samples", "genz");
  }
  CalibrationSpec& cal = c.calibration;
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, {"builtin", "command", "timeout_s", "retries"}, "model");
    if (m.contains("builtin") == m.contains("command")) {
      throw ConfigError("model: give exactly one of \"builtin\" and \"command\"");
    }
    cal.model = ModelSpec{};
    if (m.contains("builtin")) cal.model.builtin = get<std::string>(m, "builtin", "model");
    if (m.contains("command")) cal.model.command = get<std::vector<std::string>>(m, "command", "model");
    if (m.contains("timeout_s")) cal.model.timeout_s = get<double>(m, "timeout_s", "model");
    if (m.contains("retries")) cal.model.retries = get<int>(m, "retries", "model");
  }
  if (j.contains("prior")) {
    const json& p = j["prior"];
    reject_unknown(p, {"lower", "upper"}, "prior");
    try {
      cal.prior = PriorBox(get_vector(p, "lower", "prior"), get_vector(p, "upper", "prior"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("prior: ") + e.what());
    }
  }
  if (j.contains("likelihood")) {
    const json& l = j["likelihood"];
    reject_unknown(l, {"sigma_meas", "length_scale_base", "amplitude", "log_length", "include_logdet", "grid"},
                   "likelihood");
    auto& lik = cal.likelihood;
    if (l.contains("sigma_meas")) lik.sigma_meas = get<double>(l, "sigma_meas", "likelihood");
    if (l.contains("length_scale_base")) lik.length_scale_base = get<double>(l, "length_scale_base", "likelihood");
    if (l.contains("amplitude")) {
      const auto a = get<std::vector<double>>(l, "amplitude", "likelihood");
      if (a.size() != 2) throw ConfigError("likelihood.amplitude: expected [lower, upper]");
      lik.amplitude_lower = a[0];
      lik.amplitude_upper = a[1];
    }
    if (l.contains("log_length")) {
      const auto a = get<std::vector<double>>(l, "log_length", "likelihood");
      if (a.size() != 2) throw ConfigError("likelihood.log_length: expected [lower, upper]");
      lik.log_length_lower = a[0];
      lik.log_length_upper = a[1];
    }
    if (l.contains("include_logdet")) lik.include_logdet = get<bool>(l, "include_logdet", "likelihood");
    if (l.contains("grid")) {
      const auto g = get<std::vector<int>>(l, "grid", "likelihood");
      if (g.size() != 2) throw ConfigError("likelihood.grid: expected [n_A, n_l]");
      lik.grid_amplitude = g[0];
      lik.grid_length = g[1];
    }
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"locations", "values"}, "data");
    cal.likelihood.locations = get_vector(d, "locations", "data");
    if (d.contains("values")) cal.likelihood.data = get_vector(d, "values", "data");
  }
  if (j.contains("truth")) cal.truth = get_vector(j, "truth", "config");

  if (c.repeats < 1) throw ConfigError("config.repeats must be >= 1");
  if (c.sample_count < 2) throw ConfigError("config.sample_count must be >= 2");
  for (Eigen::Index k : c.sample_counts) {
    if (k < 2) throw ConfigError("config.sample_counts entries must be >= 2");
  }
  if (c.threads < 1) throw ConfigError("config.threads must be >= 1");
  if (c.measurements < 1) throw ConfigError("genz.measurements must be >= 1");
  if (!(c.noise_variance > 0.0)) throw ConfigError("genz.noise_variance must be positive");
  if (c.oracle_samples < 0) throw ConfigError("genz.oracle_samples must be >= 0");
  try {
    c.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.experiment == Experiment::calibrate) {
    if (cal.model.command.empty() && cal.model.builtin != "toy_cp") {
      throw ConfigError("model.builtin: unknown builtin model \"" + cal.model.builtin + "\"");
    }
    if (!cal.model.command.empty() && cal.likelihood.data.size() == 0) {
      throw ConfigError("data.values: required for a subprocess model");
    }
    if (cal.likelihood.data.size() != 0 && cal.likelihood.data.size() != cal.likelihood.locations.size()) {
      throw ConfigError("data: values and locations differ in length");
    }
  }
  return c;
}


RunConfig load_run_config(const std::string& path, std::optional<Experiment> experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  return parse_run_config(j, experiment);
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = to_string(c.experiment);
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  j["sample_count"] = c.sample_count;
  j["sample_counts"] = c.sample_counts;
  j["output_dir"] = c.output_dir;
  j["tol_exact"] = c.tol_exact;
  j["threads"] = c.threads;
  j["schedule"] = {{"kind", c.schedule.kind == GrowthSchedule::Kind::linear ? "linear" : "exponential"},
                   {"base", c.schedule.base},
                   {"step", c.schedule.step},
                   {"max_iterations", c.schedule.max_iterations}};
  j["baselines"] = {{"prior_only", c.prior_only}, {"tensor_cc", c.tensor_cc}, {"smolyak", c.smolyak}};
  switch (c.experiment) {
    case Experiment::analytic_beta:
      j["beta"] = {{"alpha", c.beta_alpha}, {"beta", c.beta_beta}};
      break;
    case Experiment::genz2d:
    case Experiment::genz5d:
    case Experiment::genz_dim: {
      std::vector<std::string> families;
      for (GenzFamily f : c.families) families.push_back(to_string(f));
      j["genz"] = {{"families", families},
                   {"dimension", c.dimension},
                   {"dimensions", c.dimensions},
                   {"scale", c.genz_scale},
                   {"measurements", c.measurements},
                   {"noise_variance", c.noise_variance},
                   {"oracle_samples", c.oracle_samples}};
      break;
    }
    case Experiment::calibrate: {
      const CalibrationSpec& cal = c.calibration;
      if (cal.model.command.empty()) {
        j["model"] = {{"builtin", cal.model.builtin}};
      } else {
        j["model"] = {{"command", cal.model.command}, {"timeout_s", cal.model.timeout_s}, {"retries", cal.model.retries}};
      }
      j["prior"] = {{"lower", to_std(cal.prior.lower())}, {"upper", to_std(cal.prior.upper())}};
      const auto& l = cal.likelihood;
      j["likelihood"] = {{"sigma_meas", l.sigma_meas},
                         {"length_scale_base", l.length_scale_base},
                         {"amplitude", {l.amplitude_lower, l.amplitude_upper}},
                         {"log_length", {l.log_length_lower, l.log_length_upper}},
                         {"include_logdet", l.include_logdet},
                         {"grid", {l.grid_amplitude, l.grid_length}}};
      j["data"] = {{"locations", to_std(l.locations)}};
      if (l.data.size() > 0) j["data"]["values"] = to_std(l.data);
      if (cal.truth.size() > 0) j["truth"] = to_std(cal.truth);
      break;
    }
  }
  return j;
}

// --- reports ----------------------------------------------------------------

std::vector<AggregateRow> aggregate(const std::vector<ConvergenceRow>& rows) {
  struct Acc {
    std::size_t D = 0;
    std::vector<double> N, adaptive, prior, tensor, smolyak, e;
  };
  std::map<std::pair<std::string, int>, Acc> groups;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.experiment, r.iteration);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    Acc& a = it->second;
    a.D = r.D;
    a.N.push_back(static_cast<double>(r.N));
    a.adaptive.push_back(r.err_adaptive);
    a.prior.push_back(r.err_prior_rule);
    a.tensor.push_back(r.err_tensor_cc);
    a.smolyak.push_back(r.err_smolyak);
    a.e.push_back(r.e_N);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    int n = 0;
    for (double x : v) {
      if (std::isfinite(x)) {
        s += x;
        ++n;
      }
    }
    return n ? s / n : kNaN;
  };
  auto standard_error = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    int n = 0;
    for (double x : v) {
      if (std::isfinite(x)) {
        s += (x - m) * (x - m);
        ++n;
      }
    }
    return n > 1 ? std::sqrt(s / (n - 1) / n) : kNaN;
  };
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const Acc& a = groups.at(key);
    AggregateRow row;
    row.experiment = key.first;
    row.iteration = key.second;
    row.D = a.D;
    row.mean_N = mean(a.N);
    row.err_adaptive = mean(a.adaptive);
    row.se_adaptive = standard_error(a.adaptive);
    row.err_prior_rule = mean(a.prior);
    row.se_prior_rule = standard_error(a.prior);
    row.err_tensor_cc = mean(a.tensor);
    row.err_smolyak = mean(a.smolyak);
    row.e_N = mean(a.e);
    row.repeats = static_cast<int>(a.N.size());
    out.push_back(row);
  }
  return out;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::ostringstream out;
  out << "experiment,repeat,iteration,N,D,err_adaptive,err_prior_rule,err_tensor_cc,err_smolyak,e_N\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.repeat << ',' << r.iteration << ',' << r.N << ',' << r.D << ','
        << format_number(r.err_adaptive) << ',' << format_number(r.err_prior_rule) << ','
        << format_number(r.err_tensor_cc) << ',' << format_number(r.err_smolyak) << ',' << format_number(r.e_N)
        << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "experiment,iteration,D,mean_N,err_adaptive,se_adaptive,err_prior_rule,se_prior_rule,err_tensor_cc,"
         "err_smolyak,e_N,repeats\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.iteration << ',' << r.D << ',' << format_number(r.mean_N) << ','
        << format_number(r.err_adaptive) << ',' << format_number(r.se_adaptive) << ','
        << format_number(r.err_prior_rule) << ',' << format_number(r.se_prior_rule) << ','
        << format_number(r.err_tensor_cc) << ',' << format_number(r.err_smolyak) << ',' << format_number(r.e_N)
        << ',' << r.repeats << '\n';
  }
  return out.str();
}

BetaMoments beta_oracle(double alpha, double beta) {
  const UnivariateRule gl = gauss_legendre(20);
  constexpr int kPanels = 2000;
  // log-density peak at the mode keeps the exponentials in range
  const double mode = alpha / (alpha + beta);
  auto log_rho = [&](double x) { return alpha * std::log(x) + beta * std::log1p(-x); };
  const double peak = (alpha > 0.0 && beta > 0.0) ? log_rho(mode) : 0.0;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double a = static_cast<double>(p) / kPanels, b = static_cast<double>(p + 1) / kPanels;
    for (Eigen::Index i = 0; i < gl.size(); ++i) {
      const double x = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes(i);
      const double w = 0.5 * (b - a) * gl.weights(i) * std::exp(log_rho(x) - peak);
      m0 += w;
      m1 += w * x;
      m2 += w * x * x;
    }
  }
  BetaMoments out;
  out.mean = m1 / m0;
  out.sd = std::sqrt(std::max(0.0, m2 / m0 - out.mean * out.mean));
  return out;
}

namespace {

struct InvariantCounter {
  std::size_t nesting = 0;
  std::size_t cardinality = 0;
  bool positive = true;

  StepObserver observer() {
    return [this](const AdaptiveState& before, const AdaptiveState& after) {
      const auto added = static_cast<std::size_t>(after.rule.size() - before.rule.size());
      if (after.rule.size() < before.rule.size() || added > after.history.back().degree + 1) ++cardinality;
      if (!after.history.back().nested) ++nesting;
      if ((after.rule.weights().array() < 0.0).any()) positive = false;
    };
  }
  void merge_into(ConvergenceReport& report) const {
    report.nesting_violations += nesting;
    report.cardinality_violations += cardinality;
    report.positive_weights = report.positive_weights && positive;
  }
};

struct RepeatResult {
  std::vector<ConvergenceRow> rows;
  std::vector<RunRecord> records;
  InvariantCounter invariants;
  std::optional<QuadratureRule> rule;
};

void append_records(RepeatResult& out, const std::string& label, int repeat, const std::string& variant,
                    const AdaptiveState& state) {
  for (const auto& r : state.history) out.records.push_back({label, repeat, variant, r});
}

// Latest record of `history` with node_count <= budget.
const IterationRecord* matched(const std::vector<IterationRecord>& history, std::size_t budget) {
  const IterationRecord* best = nullptr;
  for (const auto& r : history) {
    if (r.node_count <= budget) best = &r;
  }
  return best;
}

void merge(ConvergenceReport& report, std::vector<RepeatResult>& results) {
  for (auto& r : results) {
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    report.iterations.insert(report.iterations.end(), r.records.begin(), r.records.end());
    r.invariants.merge_into(report);
    if (!report.rule && r.rule) report.rule = r.rule;
  }
}

}  // namespace

ConvergenceReport run_analytic_beta(const RunConfig& config) {
  const BetaMoments oracle = beta_oracle(config.beta_alpha, config.beta_beta);
  StatisticalModel model{PriorBox::unit(1), BetaLikelihood{config.beta_alpha, config.beta_beta}};
  std::vector<Eigen::Index> counts = config.sample_counts;
  if (counts.empty()) counts = {config.sample_count};

  ConvergenceReport report;
  for (Eigen::Index count : counts) {
    const std::string label = "analytic_beta/K=" + std::to_string(count);
    auto results = parallel_map<RepeatResult>(config.repeats, config.threads, [&](int repeat) {
      RepeatResult out;
      AdaptiveConfig ac;
      ac.model = model;
      ac.evaluator = std::make_shared<FunctionModel>(1, 1, [](const Eigen::VectorXd& x) { return x; });
      ac.schedule = config.schedule;
      ac.sample_count = count;
      ac.tol_exact = config.tol_exact;
      ac.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(repeat), 0});
      const AdaptiveReport adaptive = run(ac, out.invariants.observer());
      append_records(out, label, repeat, "adaptive", adaptive.state);

      AdaptiveState prior_state;
      if (config.prior_only) {
        AdaptiveConfig pc = ac;
        pc.proposal = ProposalKind::prior;
        pc.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(repeat), 1});
        prior_state = run(pc).state;
        append_records(out, label, repeat, "prior", prior_state);
      }
      for (const auto& rec : adaptive.state.history) {
        ConvergenceRow row{label, repeat, rec.iteration, rec.node_count, rec.degree,
                           std::abs(rec.estimate(0) - oracle.mean), kNaN, kNaN, kNaN, rec.e_N};
        if (const IterationRecord* p = matched(prior_state.history, rec.node_count)) {
          row.err_prior_rule = std::abs(p->estimate(0) - oracle.mean);
        }
        out.rows.push_back(row);
      }
      if (repeat == 0) out.rule = adaptive.state.rule;
      return out;
    });
    merge(report, results);
  }
  return report;
}

namespace {

struct GenzCase {
  std::string label;
  GenzFamily family;
  int dimension;
  std::uint64_t id;
};

RepeatResult run_genz_repeat(const RunConfig& config, const GenzCase& gc, int repeat) {
  RepeatResult out;
  const int d = gc.dimension;
  const std::uint64_t rep = static_cast<std::uint64_t>(repeat);
  Engine engine = make_engine(derive_seed(config.seed, {gc.id, rep, 3}));
  const bool fixture = config.experiment == Experiment::genz2d;
  const GenzFunction fn = fixture ? genz2d_fixture(gc.family) : random_genz(gc.family, d, config.genz_scale, engine);
  Eigen::VectorXd truth(d);
  if (fixture) {
    truth.setConstant(0.5);
  } else {
    for (int i = 0; i < d; ++i) truth(i) = uniform01(engine);
  }
  const double sigma = std::sqrt(config.noise_variance);
  const SyntheticDataset data = generate_data(fn, truth, sigma, config.measurements, engine);
  const PriorBox prior = PriorBox::unit(d);
  const StatisticalModel model{prior, GaussianIIDLikelihood{data.z, sigma}};
  auto loglik_at = [&](const Eigen::MatrixXd& points) {
    Eigen::VectorXd ll(points.cols());
    const GaussianIIDLikelihood& likelihood = std::get<GaussianIIDLikelihood>(model.likelihood);
    for (Eigen::Index k = 0; k < points.cols(); ++k) ll(k) = log_gaussian_iid(evaluate_genz(fn, points.col(k)), likelihood);
    return ll;
  };

  const Eigen::Index oracle_count = config.oracle_samples > 0 ? config.oracle_samples : config.sample_count;
  const Eigen::MatrixXd oracle_points = sample_prior(prior, oracle_count, derive_seed(config.seed, {gc.id, rep, 2}));
  const Eigen::VectorXd oracle = monte_carlo_posterior_mean(oracle_points, loglik_at(oracle_points)).value;

  AdaptiveConfig ac;
  ac.model = model;
  ac.evaluator = std::make_shared<FunctionModel>(
      d, 1, [fn](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, evaluate_genz(fn, x)); });
  ac.schedule = config.schedule;
  ac.sample_count = config.sample_count;
  ac.tol_exact = config.tol_exact;
  ac.seed = derive_seed(config.seed, {gc.id, rep, 0});
  const AdaptiveReport adaptive = run(ac, out.invariants.observer());
  append_records(out, gc.label, repeat, "adaptive", adaptive.state);

  AdaptiveState prior_state;
  if (config.prior_only) {
    AdaptiveConfig pc = ac;
    pc.proposal = ProposalKind::prior;
    pc.seed = derive_seed(config.seed, {gc.id, rep, 1});
    prior_state = run(pc).state;
    append_records(out, gc.label, repeat, "prior", prior_state);
  }

  std::map<std::size_t, double> tensor_errors, smolyak_errors;
  auto grid_error = [&](const QuadratureRule& grid) {
    return max_abs_error(prior_rule_posterior_estimate(grid, grid.nodes(), loglik_at(grid.nodes())).value, oracle);
  };
  for (const auto& rec : adaptive.state.history) {
    ConvergenceRow row{gc.label, repeat, rec.iteration, rec.node_count, rec.degree,
                       max_abs_error(rec.estimate, oracle), kNaN, kNaN, kNaN, rec.e_N};
    if (const IterationRecord* p = matched(prior_state.history, rec.node_count)) {
      row.err_prior_rule = max_abs_error(p->estimate, oracle);
    }
    if (config.tensor_cc) {
      const QuadratureRule grid = tensor_grid_for_budget(prior, rec.node_count);
      const auto key = static_cast<std::size_t>(grid.size());
      if (!tensor_errors.count(key)) tensor_errors[key] = grid_error(grid);
      row.err_tensor_cc = tensor_errors[key];
    }
    if (config.smolyak) {
      const QuadratureRule grid = smolyak_for_budget(prior, rec.node_count);
      const auto key = static_cast<std::size_t>(grid.size());
      if (!smolyak_errors.count(key)) smolyak_errors[key] = grid_error(grid);
      row.err_smolyak = smolyak_errors[key];
    }
    out.rows.push_back(row);
  }
  if (repeat == 0) out.rule = adaptive.state.rule;
  return out;
}

}  // namespace

ConvergenceReport run_genz(const RunConfig& config) {
  if (config.experiment != Experiment::genz2d && config.experiment != Experiment::genz5d &&
      config.experiment != Experiment::genz_dim) {
    throw ConfigError("run_genz: not a Genz experiment");
  }
  if (config.families.empty()) throw ConfigError("genz.families: empty");
  std::vector<GenzCase> cases;
  const std::string prefix = to_string(config.experiment);
  for (std::size_t f = 0; f < config.families.size(); ++f) {
    const GenzFamily family = config.families[f];
    if (config.experiment == Experiment::genz_dim) {
      for (int d : config.dimensions) {
        if (d < 1) throw ConfigError("genz.dimensions: entries must be >= 1");
        cases.push_back({prefix + "/" + to_string(family) + "/d=" + std::to_string(d), family, d,
                         static_cast<std::uint64_t>(family) * 1000 + static_cast<std::uint64_t>(d)});
      }
    } else {
      const int d = config.experiment == Experiment::genz2d ? 2 : config.dimension;
      cases.push_back({prefix + "/" + to_string(family), family, d,
                       static_cast<std::uint64_t>(family) * 1000 + static_cast<std::uint64_t>(d)});
    }
  }
  ConvergenceReport report;
  for (const GenzCase& gc : cases) {
    auto results = parallel_map<RepeatResult>(config.repeats, config.threads,
                                              [&](int repeat) { return run_genz_repeat(config, gc, repeat); });
    merge(report, results);
  }
  if (config.experiment == Experiment::genz_dim) {
    const auto agg = aggregate(report.rows);
    std::map<std::string, double> final_error;
    for (const auto& row : agg) final_error[row.experiment] = row.err_adaptive;  // last iteration wins
    for (GenzFamily family : config.families) {
      const std::string base = prefix + "/" + to_string(family) + "/d=";
      const auto reference = final_error.find(base + "2");
      for (int d : config.dimensions) {
        const double e = final_error[base + std::to_string(d)];
        const double scaled = reference != final_error.end() ? e / reference->second : kNaN;
        report.scaled.emplace_back(to_string(family), d, e, scaled);
      }
    }
  }
  return report;
}

ConvergenceReport run_calibrate(const RunConfig& config) {
  const CalibrationSpec& cal = config.calibration;
  GPDiscrepancyLikelihood likelihood = cal.likelihood;
  const int d = cal.prior.dimension();

  std::shared_ptr<ModelEvaluator> evaluator;
  if (cal.model.command.empty()) {
    if (cal.model.builtin != "toy_cp") throw ConfigError("unknown builtin model \"" + cal.model.builtin + "\"");
    if (d != 7) throw ConfigError("prior: the toy_cp model has 7 parameters");
    const Eigen::VectorXd locations = likelihood.locations;
    evaluator = std::make_shared<FunctionModel>(
        7, static_cast<int>(locations.size()),
        [locations](const Eigen::VectorXd& theta) { return toy_cp_model(theta, locations); }, config.threads);
    if (likelihood.data.size() == 0) {
      // synthetic measurements: model at the truth, a smooth discrepancy and noise
      Engine engine = make_engine(derive_seed(config.seed, {7}));
      likelihood.data = toy_cp_model(cal.truth, locations);
      for (Eigen::Index k = 0; k < locations.size(); ++k) {
        const double u1 = 1.0 - uniform01(engine), u2 = uniform01(engine);
        const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        likelihood.data(k) += 0.02 * std::sin(3.0 * locations(k)) + likelihood.sigma_meas * n;
      }
    }
  } else {
    evaluator = std::make_shared<SubprocessModel>(cal.model.command, d,
                                                  SubprocessOptions{cal.model.timeout_s, cal.model.retries});
  }
  if (evaluator->output_dimension() != likelihood.locations.size()) {
    throw ConfigError("model output dimension differs from the number of measurement locations");
  }

  ConvergenceReport report;
  report.locations = likelihood.locations;
  // A subprocess model is shared, so repeats run one after another.
  const int threads = cal.model.command.empty() ? config.threads : 1;
  auto results = parallel_map<RepeatResult>(config.repeats, config.repeats > 1 ? threads : 1, [&](int repeat) {
    RepeatResult out;
    AdaptiveConfig ac;
    ac.model = StatisticalModel{cal.prior, likelihood};
    ac.evaluator = evaluator;
    ac.schedule = config.schedule;
    ac.sample_count = config.sample_count;
    ac.tol_exact = config.tol_exact;
    ac.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(repeat), 0});
    ac.quantity = [](const Eigen::VectorXd&, const Eigen::VectorXd& output) { return output; };
    ac.threads = config.repeats > 1 ? 1 : config.threads;
    const AdaptiveReport adaptive = run(ac, out.invariants.observer());
    append_records(out, "calibrate", repeat, "adaptive", adaptive.state);
    for (const auto& rec : adaptive.state.history) {
      out.rows.push_back({"calibrate", repeat, rec.iteration, rec.node_count, rec.degree, kNaN, kNaN, kNaN, kNaN,
                          rec.e_N});
    }
    if (repeat == 0) {
      out.rule = adaptive.state.rule;
      const QuadratureRule normalized = adaptive.state.rule.normalized();
      const Eigen::MatrixXd& u = adaptive.state.outputs;
      const Eigen::VectorXd mean = u * normalized.weights();
      const Eigen::MatrixXd centered = u.colwise() - mean;
      const Eigen::VectorXd variance = centered.array().square().matrix() * normalized.weights();
      report.predictive_mean = mean;
      report.predictive_std = variance.cwiseMax(0.0).cwiseSqrt();
      if ((variance.array() < 0.0).any()) report.positive_weights = false;
    }
    return out;
  });
  merge(report, results);
  return report;
}

ConvergenceReport run_experiment(const RunConfig& config) {
  switch (config.experiment) {
    case Experiment::analytic_beta:
      return run_analytic_beta(config);
    case Experiment::genz2d:
    case Experiment::genz5d:
    case Experiment::genz_dim:
      return run_genz(config);
    case Experiment::calibrate:
      return run_calibrate(config);
  }
  throw ConfigError("unknown experiment");
}

void write_report(const RunConfig& config, const ConvergenceReport& report, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(fs::path(directory) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(directory) / name).string());
    out << text;
  };
  write("config.json", to_json(config).dump(2) + "\n");
  std::ostringstream lines;
  for (const auto& r : report.iterations) {
    auto j = nlohmann::ordered_json::parse(to_json_line(r.record));
    nlohmann::ordered_json line;
    line["experiment"] = r.experiment;
    line["repeat"] = r.repeat;
    line["variant"] = r.variant;
    for (auto it = j.begin(); it != j.end(); ++it) line[it.key()] = it.value();
    lines << line.dump() << '\n';
  }
  write("iterations.jsonl", lines.str());
  write("convergence.csv", convergence_csv(report.rows));
  write("aggregate.csv", aggregate_csv(aggregate(report.rows)));
  if (report.rule) write("rule.json", serialize(*report.rule) + "\n");
  if (report.predictive_mean.size() > 0) {
    std::ostringstream out;
    out << "location,mean,std\n";
    for (Eigen::Index k = 0; k < report.predictive_mean.size(); ++k) {
      out << format_number(report.locations(k)) << ',' << format_number(report.predictive_mean(k)) << ','
          << format_number(report.predictive_std(k)) << '\n';
    }
    write("predictive.csv", out.str());
  }
  if (!report.scaled.empty()) {
    std::ostringstream out;
    out << "family,d,err_adaptive,scaled\n";
    for (const auto& [family, d, e, s] : report.scaled) {
      out << family << ',' << d << ',' << format_number(e) << ',' << format_number(s) << '\n';
    }
    write("scaled.csv", out.str());
  }
}

}  // namespace quadcal
