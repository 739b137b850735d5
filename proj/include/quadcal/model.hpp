#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace quadcal {

/// Deterministic map u from R^d to R^n, evaluated in batches.
class ModelEvaluator {
 public:
  virtual ~ModelEvaluator() = default;

  virtual int input_dimension() const = 0;
  virtual int output_dimension() const = 0;
  virtual std::string kind() const = 0;

  /// Points and outputs are stored one per column.
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& points) = 0;
};

/// In-process model wrapping a callable.
class FunctionModel : public ModelEvaluator {
 public:
  using Function = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  FunctionModel(int input_dimension, int output_dimension, Function fn, int threads = 1);

  int input_dimension() const override { return input_dimension_; }
  int output_dimension() const override { return output_dimension_; }
  std::string kind() const override { return "builtin"; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& points) override;

 private:
  int input_dimension_;
  int output_dimension_;
  Function fn_;
  int threads_;
};

/// Throws ModelError naming the first point whose output is not finite or
/// has the wrong size.
void check_model_outputs(const Eigen::MatrixXd& outputs, Eigen::Index point_count, int output_dimension);

}  // namespace quadcal
