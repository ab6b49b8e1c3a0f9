#pragma once

#include <stdexcept>
#include <string>

namespace extabs {

// Bad input data: malformed corpus records, unreadable files, id mismatches.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric breakdown: non-finite values entering or leaving a computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad invocation: unknown keys, out-of-range settings, missing arguments.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace extabs
