#pragma once

#include <stdexcept>
#include <string>

namespace vidcl {

// Invalid configuration (bad keys, bad flag combinations). CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent data (manifests, splits, stores). CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vidcl
