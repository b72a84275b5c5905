#pragma once

#include <stdexcept>
#include <string>

namespace couplab {

// Iterative routine stopped short of its tolerance; carries the last residual
// so callers can report how far off it was.
struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& msg, double r)
      : std::runtime_error(msg), residual(r) {}
};

// A conditional law or weight system collapsed (all mass on one point where a
// spread is required, zero total weight, empty sample).
struct DegenerateError : std::runtime_error {
  explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace couplab
