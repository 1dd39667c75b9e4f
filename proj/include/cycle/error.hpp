#pragma once

#include <stdexcept>
#include <string>

namespace cycle {

// Bad input data: malformed files, unresolved ids, inconsistent snapshots.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or API misuse (shape mismatch, out-of-range node).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or failed gradient checks.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cycle
