#include "quadcal/subprocess_model.hpp"

#include "quadcal/errors.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace quadcal {

namespace {

using json = nlohmann::json;

// Crash or timeout; the child is restarted and the batch resent.
class TransientFailure : public ModelError {
 public:
  using ModelError::ModelError;
};

std::string describe_points(Eigen::Index count) {
  std::ostringstream out;
  out << "batch of " << count << " point" << (count == 1 ? "" : "s");
  return out.str();
}

json parse_message(const std::string& line) {
  json msg = json::parse(line, nullptr, false);
  if (!msg.is_discarded()) return msg;
  // NaN and Infinity tokens are read as null.
  static const std::regex non_finite(R"((-?Infinity|NaN))");
  msg = json::parse(std::regex_replace(line, non_finite, "null"), nullptr, false);
  if (msg.is_discarded()) throw ModelError("subprocess model: malformed response line: " + line.substr(0, 200));
  return msg;
}

}  // namespace

SubprocessModel::SubprocessModel(std::vector<std::string> command, int input_dimension, SubprocessOptions options)
    : command_(std::move(command)), input_dimension_(input_dimension), options_(options) {
  if (command_.empty()) throw std::invalid_argument("SubprocessModel: empty command");
  if (input_dimension_ < 1) throw std::invalid_argument("SubprocessModel: input dimension must be >= 1");
  if (command_[0].find('/') != std::string::npos && access(command_[0].c_str(), X_OK) != 0) {
    throw std::invalid_argument("SubprocessModel: not an executable: " + command_[0]);
  }
  signal(SIGPIPE, SIG_IGN);
  launch();
}

SubprocessModel::~SubprocessModel() {
  try {
    shutdown();
  } catch (...) {
  }
}

void SubprocessModel::launch() {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw ModelError(std::string("subprocess model: pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ModelError(std::string("subprocess model: pipe: ") + std::strerror(errno));
  }
  std::vector<char*> argv;
  for (auto& arg : command_) argv.push_back(arg.data());
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) throw ModelError(std::string("subprocess model: fork: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  buffer_.clear();

  json reply;
  try {
    send_line(json{{"hello", {{"dimension", input_dimension_}}}}.dump());
    reply = parse_message(read_line(options_.timeout_s));
  } catch (...) {
    kill_child();
    throw;
  }
  if (!reply.contains("ok") || !reply["ok"].contains("output_dim") || !reply["ok"]["output_dim"].is_number_integer() ||
      reply["ok"]["output_dim"].get<int>() < 1) {
    kill_child();
    throw ModelError("subprocess model: bad handshake reply: " + reply.dump());
  }
  const int output_dim = reply["ok"]["output_dim"].get<int>();
  if (output_dimension_ != 0 && output_dim != output_dimension_) {
    kill_child();
    throw ModelError("subprocess model: output dimension changed after restart");
  }
  output_dimension_ = output_dim;
}

void SubprocessModel::kill_child() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
}

void SubprocessModel::shutdown() {
  if (pid_ <= 0) return;
  try {
    send_line(json{{"bye", json::object()}}.dump());
  } catch (...) {
  }
  close(to_child_);
  to_child_ = -1;
  for (int i = 0; i < 100; ++i) {
    if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  kill_child();
}

void SubprocessModel::send_line(const std::string& line) {
  if (to_child_ < 0) throw TransientFailure("subprocess model: not running");
  const std::string data = line + "\n";
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = write(to_child_, data.data() + sent, data.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransientFailure(std::string("subprocess model: write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string SubprocessModel::read_line(double timeout_s) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (true) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) throw TransientFailure("subprocess model: timed out after " + std::to_string(timeout_s) + " s");
    pollfd fd{from_child_, POLLIN, 0};
    const int ready = poll(&fd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransientFailure(std::string("subprocess model: poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransientFailure(std::string("subprocess model: read: ") + std::strerror(errno));
    }
    if (n == 0) {
      int status = 0;
      std::string how = "closed its output";
      if (pid_ > 0 && waitpid(pid_, &status, 0) == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) how = "exited with status " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) how = "was killed by signal " + std::to_string(WTERMSIG(status));
      }
      throw TransientFailure("subprocess model: process " + how);
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Eigen::MatrixXd SubprocessModel::evaluate_once(const Eigen::MatrixXd& points) {
  const long id = next_id_++;
  json pts = json::array();
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    json p = json::array();
    for (Eigen::Index i = 0; i < points.rows(); ++i) p.push_back(points(i, k));
    pts.push_back(std::move(p));
  }
  send_line(json{{"eval", {{"id", id}, {"points", std::move(pts)}}}}.dump());
  const json reply = parse_message(read_line(options_.timeout_s));
  if (!reply.contains("result") || !reply["result"].is_object()) {
    throw ModelError("subprocess model: unexpected reply to " + describe_points(points.cols()) + ": " +
                     reply.dump().substr(0, 200));
  }
  const json& result = reply["result"];
  if (!result.contains("id") || !result["id"].is_number_integer() || result["id"].get<long>() != id) {
    throw ModelError("subprocess model: reply id does not match request " + std::to_string(id));
  }
  if (!result.contains("values") || !result["values"].is_array() ||
      result["values"].size() != static_cast<std::size_t>(points.cols())) {
    throw ModelError("subprocess model: expected " + std::to_string(points.cols()) + " value rows for " +
                     describe_points(points.cols()));
  }
  Eigen::MatrixXd out(output_dimension_, points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    const json& row = result["values"][static_cast<std::size_t>(k)];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(output_dimension_)) {
      throw ModelError("subprocess model: point " + std::to_string(k) + " has " +
                       std::to_string(row.is_array() ? row.size() : 0) + " values, expected " +
                       std::to_string(output_dimension_));
    }
    for (int i = 0; i < output_dimension_; ++i) {
      const json& v = row[static_cast<std::size_t>(i)];
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw ModelError("subprocess model: non-finite value at point " + std::to_string(k));
      }
      out(i, k) = v.get<double>();
    }
  }
  return out;
}

Eigen::MatrixXd SubprocessModel::evaluate(const Eigen::MatrixXd& points) {
  if (points.cols() > 0 && points.rows() != input_dimension_) {
    throw std::invalid_argument("SubprocessModel: point dimension mismatch");
  }
  for (int attempt = 0;; ++attempt) {
    try {
      if (pid_ <= 0) launch();
      return evaluate_once(points);
    } catch (const TransientFailure& e) {
      kill_child();
      if (attempt >= options_.retries) {
        throw ModelError(std::string(e.what()) + " while evaluating " + describe_points(points.cols()) + " after " +
                         std::to_string(attempt + 1) + " attempt(s)");
      }
    }
  }
}

}  // namespace quadcal
