#pragma once

#include <stdexcept>
#include <string>

namespace mftg {

// Raised for malformed or invalid input data (config files, gain files).
// Carries the offending key path so the CLI can point at it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Raised when a computation produces non-finite values or an unusable
// factorization outside the paths that report such states as data.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mftg
