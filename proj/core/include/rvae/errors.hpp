#pragma once

#include <stdexcept>
#include <string>

namespace rvae {

/// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed file contents (bad magic, bad header, truncated payload).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure; the message always names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or gradient went non-finite during optimization.
class TrainingDivergence : public std::runtime_error {
 public:
  explicit TrainingDivergence(const std::string& what, std::string checkpoint = {})
      : std::runtime_error(what), checkpoint_(std::move(checkpoint)) {}

  /// Path of the last good checkpoint, empty when none was written.
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace rvae
