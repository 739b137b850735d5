#include "quadcal/genz.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace quadcal {

namespace {

constexpr std::array<std::pair<GenzFamily, const char*>, 6> kFamilyNames{{
    {GenzFamily::oscillatory, "oscillatory"},
    {GenzFamily::product_peak, "product_peak"},
    {GenzFamily::corner_peak, "corner_peak"},
    {GenzFamily::gaussian, "gaussian"},
    {GenzFamily::c0, "c0"},
    {GenzFamily::discontinuous, "discontinuous"},
}};

}  // namespace

std::string to_string(GenzFamily family) {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

std::optional<GenzFamily> parse_genz_family(const std::string& name) {
  for (const auto& [f, n] : kFamilyNames) {
    if (name == n) return f;
  }
  return std::nullopt;
}

double evaluate_genz(const GenzFunction& fn, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index d = fn.a.size();
  if (x.size() != d || fn.b.size() != d) throw std::invalid_argument("evaluate_genz: dimension mismatch");
  switch (fn.family) {
    case GenzFamily::oscillatory:
      return std::cos(2.0 * std::numbers::pi * fn.b(0) + fn.a.dot(x));
    case GenzFamily::product_peak: {
      double p = 1.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double t = x(i) - fn.b(i);
        p /= 1.0 / (fn.a(i) * fn.a(i)) + t * t;
      }
      return p;
    }
    case GenzFamily::corner_peak:
      return std::pow(1.0 + fn.a.dot(x), -static_cast<double>(d + 1));
    case GenzFamily::gaussian:
      return std::exp(-(fn.a.array().square() * (x - fn.b).array().square()).sum());
    case GenzFamily::c0:
      return std::exp(-(fn.a.array() * (x - fn.b).array().abs()).sum());
    case GenzFamily::discontinuous: {
      const bool first = x(0) > fn.b(0);
      const bool second = d > 1 && x(1) > fn.b(1);
      const bool cut = fn.discontinuity_requires_all ? (first && (d == 1 || second)) : (first || second);
      return cut ? 0.0 : std::exp(fn.a.dot(x));
    }
  }
  throw std::invalid_argument("evaluate_genz: unknown family");
}

GenzFunction random_genz(GenzFamily family, int dimension, double scale, Engine& engine) {
  if (dimension < 1) throw std::invalid_argument("random_genz: dimension must be >= 1");
  if (!(scale > 0.0)) throw std::invalid_argument("random_genz: scale must be positive");
  GenzFunction fn;
  fn.family = family;
  fn.a.resize(dimension);
  fn.b.resize(dimension);
  do {
    for (int i = 0; i < dimension; ++i) fn.a(i) = uniform01(engine);
  } while (fn.a.norm() == 0.0);
  for (int i = 0; i < dimension; ++i) fn.b(i) = uniform01(engine);
  fn.a *= scale / fn.a.norm();
  return fn;
}

GenzFunction genz2d_fixture(GenzFamily family) {
  GenzFunction fn;
  fn.family = family;
  switch (family) {
    case GenzFamily::product_peak:
      fn.a = Eigen::Vector2d(2.0, 2.0);
      fn.b = Eigen::Vector2d(0.5, 0.5);
      break;
    case GenzFamily::c0:
      fn.a = Eigen::Vector2d(1.0, 1.0);
      fn.b = Eigen::Vector2d(0.5, 0.5);
      break;
    case GenzFamily::discontinuous:
      fn.a = Eigen::Vector2d(1.0, 1.0);
      fn.b = Eigen::Vector2d(0.6, 0.6);
      fn.discontinuity_requires_all = true;
      break;
    default:
      throw std::invalid_argument("genz2d_fixture: only product_peak, c0 and discontinuous have fixtures");
  }
  return fn;
}

SyntheticDataset generate_data(const GenzFunction& fn, const Eigen::VectorXd& truth, double sigma, int m,
                               Engine& engine) {
  if (m < 1) throw std::invalid_argument("generate_data: m must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("generate_data: sigma must be >= 0");
  SyntheticDataset data;
  data.truth = truth;
  data.sigma = sigma;
  data.z.resize(m);
  const double value = evaluate_genz(fn, truth);
  // Box-Muller transform
  for (int k = 0; k < m; ++k) {
    const double u1 = 1.0 - uniform01(engine);
    const double u2 = uniform01(engine);
    const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    data.z(k) = value + sigma * n;
  }
  return data;
}

}  // namespace quadcal
