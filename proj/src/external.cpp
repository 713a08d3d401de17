#include "lca/external.hpp"

#include <cerrno>
#include <cctype>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "lca/error.hpp"

namespace lca {

using nlohmann::json;

Subprocess::Subprocess(const std::string& shell_command) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw TrainerError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  pid_ = ::fork();
  if (pid_ < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw TrainerError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    // Own process group, so a timeout also reaches whatever the shell spawned.
    ::setpgid(0, 0);
    ::close(fds[0]);
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    if (fds[1] > STDOUT_FILENO) ::close(fds[1]);
    ::execl("/bin/sh", "sh", "-c", shell_command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid_, pid_);
  ::close(fds[1]);
  fd_ = fds[0];
}

Subprocess::~Subprocess() { terminate(); }

void Subprocess::terminate() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    // Give the child a moment to exit on EOF before killing it.
    for (int i = 0; i < 20; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        ::kill(-pid_, SIGKILL);
        pid_ = -1;
        return;
      }
      ::usleep(5000);
    }
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

bool Subprocess::write_line(const std::string& line) {
  if (fd_ < 0) return false;
  std::string data = line + "\n";
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::string> Subprocess::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (fd_ < 0) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TrainerError("trainer reply timed out");
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) throw TrainerError("trainer reply timed out");
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ProbVector parse_predict_reply(const json& reply, std::size_t classes) {
  if (!reply.is_object() || !reply.contains("ok") || !reply.at("ok").is_boolean()) {
    throw TrainerError("protocol violation: reply lacks boolean 'ok'");
  }
  if (!reply.at("ok").get<bool>()) {
    throw TrainerError("trainer reported error: " + reply.value("error", std::string("(none given)")));
  }
  if (!reply.contains("probs") || !reply.at("probs").is_array()) {
    throw TrainerError("protocol violation: predict reply lacks 'probs'");
  }
  ProbVector p;
  for (const auto& v : reply.at("probs")) {
    if (!v.is_number()) throw TrainerError("protocol violation: non-numeric probability");
    p.push_back(v.get<double>());
  }
  if (p.size() != classes) {
    throw TrainerError("protocol violation: probs has " + std::to_string(p.size()) + " entries, expected " +
                       std::to_string(classes));
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw TrainerError("protocol violation: negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4) {
    throw TrainerError("protocol violation: probs sum to " + std::to_string(sum));
  }
  return p;
}

ExternalClassifier::ExternalClassifier(std::string command, ExternalOptions options)
    : command_(std::move(command)), options_(std::move(options)) {}

json ExternalClassifier::exchange(const json& request) {
  if (!child_->write_line(request.dump())) {
    throw TrainerError("trainer failure in run " + run_id_ + ": child process exited");
  }
  std::optional<std::string> line;
  try {
    line = child_->read_line(options_.timeout);
  } catch (const TrainerError& e) {
    throw TrainerError("trainer failure in run " + run_id_ + ": " + e.what());
  }
  if (!line) throw TrainerError("trainer failure in run " + run_id_ + ": child process exited");
  try {
    return json::parse(*line);
  } catch (const json::exception&) {
    throw TrainerError("trainer failure in run " + run_id_ + ": protocol violation, malformed reply '" +
                       line->substr(0, 200) + "'");
  }
}

void ExternalClassifier::fit(const FitRequest& request) {
  if (request.train == nullptr) throw ValidationError("fit request has no training manifest");
  run_id_ = request.run_id;
  classes_ = request.train->labels.size();
  checkpoints_ = request.config.checkpoint_epochs();
  std::filesystem::create_directories(options_.scratch_dir);
  std::string safe_id = run_id_;
  for (auto& c : safe_id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  const auto manifest_path = options_.scratch_dir / ("fit-" + safe_id + ".csv");
  {
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + manifest_path.string());
    write_manifest(out, *request.train);
  }
  child_.reset();
  child_.emplace(command_);
  json names = json::array();
  for (std::size_t i = 0; i < classes_; ++i) names.push_back(request.train->labels.display_name(i));
  const json reply = exchange({{"cmd", "fit"},
                               {"run_id", run_id_},
                               {"classes", names},
                               {"weights", request.weights.w},
                               {"policy", to_json(request.policy)},
                               {"config", to_json(request.config)},
                               {"manifest_path", manifest_path.string()}});
  if (!reply.is_object() || !reply.value("ok", false)) {
    std::string why = reply.is_object() ? reply.value("error", std::string("no 'ok'")) : "non-object reply";
    throw TrainerError("trainer failure in run " + run_id_ + ": fit rejected: " + why);
  }
}

std::vector<int> ExternalClassifier::checkpoint_epochs() const { return checkpoints_; }

ProbVector ExternalClassifier::predict(const SampleMeta& sample, int epoch) {
  if (!child_) throw ValidationError("predict before fit");
  const json reply = exchange(
      {{"cmd", "predict"}, {"run_id", run_id_}, {"image_path", sample.path}, {"epoch", epoch}});
  try {
    return parse_predict_reply(reply, classes_);
  } catch (const TrainerError& e) {
    throw TrainerError("trainer failure in run " + run_id_ + ": " + e.what());
  }
}

}  // namespace lca
