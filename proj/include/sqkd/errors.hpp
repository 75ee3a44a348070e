#pragma once

#include <stdexcept>
#include <string>

namespace sqkd {

// Error taxonomy, coarsest split that callers actually branch on.

// Bad user-facing parameters: protocol params, attack params, config files.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes don't line up, or a state would exceed the dimension cap.
struct dimension_error : std::runtime_error {
  explicit dimension_error(const std::string& what) : std::runtime_error(what) {}
};

// Mathematically out-of-domain request (negative counts, invalid ranges, ...).
struct domain_error : std::runtime_error {
  explicit domain_error(const std::string& what) : std::runtime_error(what) {}
};

// Exhaustive enumeration would exceed the configured cap. Never downgraded to
// sampling; the caller decides what to do.
struct cap_error : std::runtime_error {
  explicit cap_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical invariant broken (norm, unitarity, hermiticity, positivity).
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sqkd
