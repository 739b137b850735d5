#pragma once

#include "quadcal/model.hpp"

#include <sys/types.h>

#include <string>
#include <vector>

namespace quadcal {

struct SubprocessOptions {
  double timeout_s = 300.0;
  /// Relaunch-and-resend attempts after a crash or timeout.
  int retries = 1;
};

/// Model served by an external executable speaking line-delimited JSON on
/// stdin/stdout:
///
///   -> {"hello": {"dimension": d}}                 <- {"ok": {"output_dim": n}}
///   -> {"eval": {"id": k, "points": [[...], ...]}} <- {"result": {"id": k, "values": [[...], ...]}}
///   -> {"bye": {}}
class SubprocessModel : public ModelEvaluator {
 public:
  SubprocessModel(std::vector<std::string> command, int input_dimension, SubprocessOptions options = {});
  ~SubprocessModel() override;

  SubprocessModel(const SubprocessModel&) = delete;
  SubprocessModel& operator=(const SubprocessModel&) = delete;

  int input_dimension() const override { return input_dimension_; }
  int output_dimension() const override { return output_dimension_; }
  std::string kind() const override { return "subprocess"; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& points) override;

  /// Sends bye and reaps the child.
  void shutdown();

 private:
  void launch();
  void kill_child();
  void send_line(const std::string& line);
  std::string read_line(double timeout_s);
  Eigen::MatrixXd evaluate_once(const Eigen::MatrixXd& points);

  std::vector<std::string> command_;
  int input_dimension_;
  int output_dimension_ = 0;
  SubprocessOptions options_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  long next_id_ = 0;
};

}  // namespace quadcal
