#include "quadcal/rules.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

namespace quadcal {

using nlohmann::json;

QuadratureRule::QuadratureRule(Eigen::MatrixXd nodes, Eigen::VectorXd weights,
                               std::size_t exactness_count, std::size_t evaluated_count,
                               bool signed_weights)
    : nodes_(std::move(nodes)),
      weights_(std::move(weights)),
      exactness_count_(exactness_count),
      evaluated_count_(evaluated_count),
      signed_weights_(signed_weights) {
  if (weights_.size() != nodes_.cols()) {
    throw std::invalid_argument("QuadratureRule: " + std::to_string(weights_.size()) + " weights for " +
                                std::to_string(nodes_.cols()) + " nodes");
  }
  if (evaluated_count_ > static_cast<std::size_t>(nodes_.cols())) {
    throw std::invalid_argument("QuadratureRule: evaluated_count exceeds node count");
  }
  if (!nodes_.allFinite() || !weights_.allFinite()) {
    throw std::invalid_argument("QuadratureRule: non-finite node or weight");
  }
  if (!signed_weights_) {
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
      if (weights_(k) < -kNegativeWeightTolerance) {
        throw std::domain_error("QuadratureRule: negative weight " + std::to_string(weights_(k)) +
                                " at node " + std::to_string(k));
      }
      if (weights_(k) < 0.0) weights_(k) = 0.0;
    }
  }
  if (!has_distinct_nodes(nodes_)) throw std::invalid_argument("QuadratureRule: duplicate nodes");
}

QuadratureRule QuadratureRule::normalized() const {
  const double total = weights_.sum();
  if (!(total > 0.0)) throw std::domain_error("QuadratureRule::normalized: non-positive total weight");
  return QuadratureRule(nodes_, weights_ / total, exactness_count_, evaluated_count_, signed_weights_);
}

RuleEstimate apply(const QuadratureRule& rule, const Eigen::MatrixXd& values) {
  if (values.cols() != rule.size()) {
    throw std::invalid_argument("apply: " + std::to_string(values.cols()) + " values for " +
                                std::to_string(rule.size()) + " nodes");
  }
  return {values * rule.weights(), rule.weights().sum()};
}

Eigen::VectorXd apply_normalized(const QuadratureRule& rule, const Eigen::MatrixXd& values) {
  RuleEstimate estimate = apply(rule, values);
  if (estimate.normalization == 0.0) throw std::domain_error("apply_normalized: zero total weight");
  return estimate.value / estimate.normalization;
}

namespace {

// Indices of columns sorted lexicographically by coordinates.
std::vector<Eigen::Index> lexicographic_order(const Eigen::MatrixXd& nodes) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(nodes.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
      if (nodes(i, a) != nodes(i, b)) return nodes(i, a) < nodes(i, b);
    }
    return a < b;
  });
  return order;
}

}  // namespace

bool has_distinct_nodes(const Eigen::MatrixXd& nodes) {
  const auto order = lexicographic_order(nodes);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (nodes.col(order[k]) == nodes.col(order[k - 1])) return false;
  }
  return true;
}

double default_nesting_tolerance(const QuadratureRule& coarse, const QuadratureRule& fine) {
  double diameter = 0.0;
  if (coarse.size() + fine.size() > 0) {
    Eigen::MatrixXd all(coarse.dimension(), coarse.size() + fine.size());
    all << coarse.nodes(), fine.nodes();
    diameter = (all.rowwise().maxCoeff() - all.rowwise().minCoeff()).norm();
  }
  return 1e-12 * (1.0 + diameter);
}

bool is_nested(const QuadratureRule& coarse, const QuadratureRule& fine, double tol) {
  if (coarse.size() == 0) return true;
  if (coarse.dimension() != fine.dimension()) return false;
  // Sort fine nodes by first coordinate and scan the window [x0 - tol, x0 + tol].
  std::vector<Eigen::Index> order(static_cast<std::size_t>(fine.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return fine.nodes()(0, a) < fine.nodes()(0, b); });
  for (Eigen::Index k = 0; k < coarse.size(); ++k) {
    const auto x = coarse.node(k);
    auto it = std::lower_bound(order.begin(), order.end(), x(0) - tol,
                               [&](Eigen::Index idx, double v) { return fine.nodes()(0, idx) < v; });
    bool found = false;
    for (; it != order.end() && fine.nodes()(0, *it) <= x(0) + tol; ++it) {
      if ((fine.node(*it) - x).cwiseAbs().maxCoeff() <= tol) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

std::string serialize(const QuadratureRule& rule) {
  json j;
  j["dimension"] = rule.dimension();
  json nodes = json::array();
  for (Eigen::Index k = 0; k < rule.size(); ++k) {
    json node = json::array();
    for (Eigen::Index i = 0; i < rule.dimension(); ++i) node.push_back(rule.nodes()(i, k));
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  j["weights"] = std::vector<double>(rule.weights().data(), rule.weights().data() + rule.weights().size());
  j["exactness_count"] = rule.exactness_count();
  j["evaluated_count"] = rule.evaluated_count();
  if (rule.signed_weights()) j["signed_weights"] = true;
  // nlohmann emits the shortest representation that round-trips exactly.
  return j.dump();
}

namespace {

double number_at(const json& value, const std::string& where) {
  if (!value.is_number()) throw RuleFormatError("rule file: expected number at " + where);
  return value.get<double>();
}

std::size_t count_at(const json& root, const char* key) {
  if (!root.contains(key)) throw RuleFormatError(std::string("rule file: missing field '") + key + "'");
  const json& value = root.at(key);
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
    throw RuleFormatError(std::string("rule file: field '") + key + "' must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

}  // namespace

QuadratureRule deserialize(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw RuleFormatError("rule file: parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw RuleFormatError("rule file: top level must be an object");
  const std::size_t dimension = count_at(root, "dimension");
  if (dimension == 0) throw RuleFormatError("rule file: dimension must be positive");
  if (!root.contains("nodes") || !root["nodes"].is_array()) throw RuleFormatError("rule file: 'nodes' must be an array");
  if (!root.contains("weights") || !root["weights"].is_array()) {
    throw RuleFormatError("rule file: 'weights' must be an array");
  }
  const json& nodes_json = root["nodes"];
  const json& weights_json = root["weights"];
  if (nodes_json.size() != weights_json.size()) {
    throw RuleFormatError("rule file: " + std::to_string(nodes_json.size()) + " nodes but " +
                          std::to_string(weights_json.size()) + " weights");
  }
  const bool signed_weights = root.value("signed_weights", false);
  const auto n = static_cast<Eigen::Index>(nodes_json.size());
  Eigen::MatrixXd nodes(static_cast<Eigen::Index>(dimension), n);
  Eigen::VectorXd weights(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const json& node = nodes_json[static_cast<std::size_t>(k)];
    if (!node.is_array() || node.size() != dimension) {
      throw RuleFormatError("rule file: nodes[" + std::to_string(k) + "] must have " +
                            std::to_string(dimension) + " coordinates");
    }
    for (std::size_t i = 0; i < dimension; ++i) {
      nodes(static_cast<Eigen::Index>(i), k) =
          number_at(node[i], "nodes[" + std::to_string(k) + "][" + std::to_string(i) + "]");
    }
    weights(k) = number_at(weights_json[static_cast<std::size_t>(k)], "weights[" + std::to_string(k) + "]");
    if (weights(k) < 0.0 && !signed_weights) {
      throw RuleFormatError("rule file: negative weight at weights[" + std::to_string(k) + "]");
    }
  }
  try {
    return QuadratureRule(std::move(nodes), std::move(weights), count_at(root, "exactness_count"),
                          count_at(root, "evaluated_count"), signed_weights);
  } catch (const std::logic_error& e) {
    throw RuleFormatError(std::string("rule file: ") + e.what());
  }
}

void save_rule(const QuadratureRule& rule, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize(rule) << '\n';
}

QuadratureRule load_rule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

}  // namespace quadcal
