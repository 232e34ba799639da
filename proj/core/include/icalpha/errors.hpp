#pragma once

#include <stdexcept>
#include <string>

namespace icalpha {

/// Bad input data or configuration: malformed files, schema violations,
/// invalid model specs. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure while fitting: singular normal matrix, saturated
/// alpha link, perfect separation. Maps to CLI exit code 2.
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace icalpha
