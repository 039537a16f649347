#pragma once

#include <stdexcept>
#include <string>

namespace blockid {

/// Malformed experiment description or inconsistent user input.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Instability, non-convergence or an ill-posed numerical problem.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Every root track fell between the fixed and moving thresholds.
class IndeterminateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A static nonlinearity sits on a jump or kink where the requested
/// linearization does not exist.
class LinearizationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace blockid
