#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <sys/types.h>

#include <nlohmann/json.hpp>

#include "lca/classifier.hpp"

namespace lca {

// Child process connected through a socket on its stdin/stdout; killed on destruction.
class Subprocess {
 public:
  explicit Subprocess(const std::string& shell_command);
  ~Subprocess();
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  // Returns false if the child has gone away.
  bool write_line(const std::string& line);
  // nullopt on EOF; throws TrainerError on timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);
  void terminate();

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

struct ExternalOptions {
  std::chrono::milliseconds timeout{std::chrono::minutes(30)};
  // Training manifests handed to the child are written here.
  std::filesystem::path scratch_dir = std::filesystem::temp_directory_path();
};

// Line-delimited JSON trainer protocol:
//   {"cmd":"fit", run_id, classes, weights, policy, config, manifest_path} -> {"ok":true}
//   {"cmd":"predict", run_id, image_path, epoch}                         -> {"ok":true,"probs":[...]}
// Failures reply {"ok":false,"error":...}.
class ExternalClassifier : public Classifier {
 public:
  ExternalClassifier(std::string command, ExternalOptions options = {});

  void fit(const FitRequest& request) override;
  std::vector<int> checkpoint_epochs() const override;
  ProbVector predict(const SampleMeta& sample, int epoch) override;

 private:
  nlohmann::json exchange(const nlohmann::json& request);

  std::string command_;
  ExternalOptions options_;
  std::optional<Subprocess> child_;
  std::string run_id_;
  std::size_t classes_ = 0;
  std::vector<int> checkpoints_;
};

// Validates a predict reply: ok, probs of length `classes`, summing to 1 within 1e-4.
ProbVector parse_predict_reply(const nlohmann::json& reply, std::size_t classes);

}  // namespace lca
