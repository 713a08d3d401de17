#pragma once

#include <stdexcept>
#include <string>

namespace lca {

// Broad failure classes; the CLI maps each to its own exit code.
enum class ErrorKind { kValidation, kData, kTrainer, kIo };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class TrainerError : public Error {
 public:
  explicit TrainerError(const std::string& what) : Error(ErrorKind::kTrainer, what) {}
};

enum class PpmErrorCode { kBadMagic, kBadHeader, kBadMaxval, kTruncated };

class PpmError : public DataError {
 public:
  PpmError(PpmErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  PpmErrorCode code() const noexcept { return code_; }

 private:
  PpmErrorCode code_;
};

enum class ManifestErrorCode { kMissingColumn, kUnknownLabel, kDuplicateImageId, kMalformed };

class ManifestError : public DataError {
 public:
  ManifestError(ManifestErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  ManifestErrorCode code() const noexcept { return code_; }

 private:
  ManifestErrorCode code_;
};

// A metric whose denominator is zero, e.g. precision of a never-predicted class.
class UndefinedMetricError : public DataError {
 public:
  UndefinedMetricError(int class_index, std::string metric, const std::string& what)
      : DataError(what), class_index_(class_index), metric_(std::move(metric)) {}
  int class_index() const noexcept { return class_index_; }
  const std::string& metric() const noexcept { return metric_; }

 private:
  int class_index_;
  std::string metric_;
};

// Raised when a journal's grid or seed does not match the requested search.
class ResumeMismatchError : public ValidationError {
 public:
  explicit ResumeMismatchError(const std::string& what) : ValidationError(what) {}
};

}  // namespace lca
