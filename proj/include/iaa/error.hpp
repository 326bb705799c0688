#pragma once

#include <stdexcept>
#include <string>

namespace iaa {

/// Broad failure classes; the CLI maps each onto its own exit code.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string &what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
public:
  explicit NumericalError(const std::string &what) : Error(ErrorKind::numerical, what) {}
};

inline const char *to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::config:
    return "config";
  case ErrorKind::data:
    return "data";
  case ErrorKind::numerical:
    return "numerical";
  }
  return "unknown";
}

} // namespace iaa
