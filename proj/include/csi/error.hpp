#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace csi {

// Status codes shared with the C API (see csi.h).
enum class ErrorCode : int {
  Config = 2,
  Policy = 3,
  Coverage = 4,
  Precondition = 5,
  Numerical = 6,
  DegenerateEnvironment = 7,
  Parse = 8,
  Io = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::Config, what) {}
};

class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& what) : Error(ErrorCode::Policy, what) {}
};

class CoverageError : public Error {
 public:
  explicit CoverageError(const std::string& what)
      : Error(ErrorCode::Coverage, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(ErrorCode::Precondition, what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int iteration)
      : Error(ErrorCode::Numerical,
              what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class DegenerateEnvironmentError : public Error {
 public:
  DegenerateEnvironmentError(const std::string& what, std::uint64_t env_seed)
      : Error(ErrorCode::DegenerateEnvironment,
              what + " (env_seed " + std::to_string(env_seed) + ")"),
        env_seed_(env_seed) {}
  std::uint64_t env_seed() const noexcept { return env_seed_; }

 private:
  std::uint64_t env_seed_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorCode::Parse, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::Io, what) {}
};

}  // namespace csi
