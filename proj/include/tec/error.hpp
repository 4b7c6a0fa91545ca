#pragma once

#include <stdexcept>
#include <string>

namespace tec {

/// Invalid configuration or mismatched dimensions supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration that is well-formed but not supported by the chosen component
/// (e.g. an oracle reward on a non-tabular environment).
class UnsupportedConfiguration : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Non-finite values or a failed numerical routine.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated (stale cache, empty support, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

inline void expect(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace detail
}  // namespace tec
