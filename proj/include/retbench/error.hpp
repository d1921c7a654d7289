#pragma once

#include <stdexcept>
#include <string>

namespace retbench {

/// Process exit codes shared by every subcommand.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kTransport = 3,
  kInternal = 4,
};

/// Base of all harness errors; carries the exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad arguments or configuration.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Missing or malformed input data (corpus files, qrels, cache entries).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Remote backend unreachable or retries exhausted.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ExitCode::kTransport, what) {}
};

/// Remote backend answered, but not in the v1 wire format.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ExitCode::kTransport, what) {}
};

/// A contract between pipeline stages was broken (e.g. wrong embedding dim).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ExitCode::kInternal, what) {}
};

/// Wraps an error with the pipeline stage it came from, keeping the exit code.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& inner)
      : Error(inner.code(), stage + ": " + inner.what()), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace retbench
