#include "quadcal/model.hpp"

#include "quadcal/errors.hpp"

#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace quadcal {

FunctionModel::FunctionModel(int input_dimension, int output_dimension, Function fn, int threads)
    : input_dimension_(input_dimension), output_dimension_(output_dimension), fn_(std::move(fn)), threads_(threads) {
  if (input_dimension < 1 || output_dimension < 1) throw std::invalid_argument("FunctionModel: dimensions must be >= 1");
  if (!fn_) throw std::invalid_argument("FunctionModel: empty function");
}

Eigen::MatrixXd FunctionModel::evaluate(const Eigen::MatrixXd& points) {
  if (points.rows() != input_dimension_ && points.cols() > 0) {
    throw std::invalid_argument("FunctionModel: point dimension mismatch");
  }
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd out(output_dimension_, n);
  auto eval = [&](Eigen::Index k) {
    const Eigen::VectorXd y = fn_(points.col(k));
    if (y.size() != output_dimension_) {
      std::ostringstream msg;
      msg << "model returned " << y.size() << " values at point " << k << ", expected " << output_dimension_;
      throw ModelError(msg.str());
    }
    out.col(k) = y;
  };
  if (threads_ <= 1 || n < 2) {
    for (Eigen::Index k = 0; k < n; ++k) eval(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads_));
    for (int t = 0; t < threads_; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (Eigen::Index k = t; k < n; k += threads_) eval(k);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  check_model_outputs(out, n, output_dimension_);
  return out;
}

void check_model_outputs(const Eigen::MatrixXd& outputs, Eigen::Index point_count, int output_dimension) {
  if (outputs.cols() != point_count || (point_count > 0 && outputs.rows() != output_dimension)) {
    std::ostringstream msg;
    msg << "model returned a " << outputs.rows() << "x" << outputs.cols() << " result for " << point_count
        << " points of output dimension " << output_dimension;
    throw ModelError(msg.str());
  }
  for (Eigen::Index k = 0; k < outputs.cols(); ++k) {
    if (!outputs.col(k).allFinite()) {
      std::ostringstream msg;
      msg << "model returned a non-finite value at point " << k;
      throw ModelError(msg.str());
    }
  }
}

}  // namespace quadcal
