#pragma once

#include <stdexcept>
#include <string>

namespace atlas {

// Bad configuration or command-line usage. Maps to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable input data, missing or stale stage caches. Maps to exit status 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace atlas
