#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qdspin {

/// Precondition on a numeric argument was violated.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A file or stream did not match the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Config file rejected; carries the offending key and line (0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, std::string key, int line)
      : std::runtime_error(msg), key_(std::move(key)), line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

/// The least-squares problem has a direction of zero curvature.
class DegenerateFitError : public std::runtime_error {
 public:
  DegenerateFitError(const std::string& msg, std::string parameter)
      : std::runtime_error(msg), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

}  // namespace qdspin
