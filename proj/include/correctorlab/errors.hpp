#pragma once

#include <stdexcept>
#include <string>

namespace clab {

/// Base class for all corrector-lab errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A mean-free right-hand side was required (massless solve) but not supplied.
struct MeanNotZero : Error {
  explicit MeanNotZero(double relative_mean)
      : Error("right-hand side has nonvanishing mean (relative " +
              std::to_string(relative_mean) + ") in a massless solve"),
        relative_mean(relative_mean) {}
  double relative_mean;
};

/// Iterative solver exhausted its iteration budget.
struct NoConvergence : Error {
  NoConvergence(long iterations, double residual)
      : Error("solver did not converge: " + std::to_string(iterations) +
              " iterations, residual " + std::to_string(residual)),
        iterations(iterations), residual(residual) {}
  long iterations;
  double residual;
};

/// Newton line search could not find a residual-decreasing step.
struct LineSearchStall : Error {
  LineSearchStall() : Error("Newton line search stalled") {}
};

/// No grid node fell inside the requested ball.
struct EmptyBall : Error {
  EmptyBall() : Error("no grid node inside the requested ball") {}
};

/// A derivative of higher order than the model provides was requested.
struct OrderUnavailable : Error {
  explicit OrderUnavailable(int order)
      : Error("derivative order " + std::to_string(order) + " not available"),
        order(order) {}
  int order;
};

/// Set-partition enumeration capped at order 6.
struct OrderTooLarge : Error {
  explicit OrderTooLarge(int order)
      : Error("partition order " + std::to_string(order) + " exceeds cap"),
        order(order) {}
  int order;
};

/// A corrector required by a hierarchy operation has not been solved yet.
struct MissingSubcorrector : Error {
  explicit MissingSubcorrector(const std::string& which)
      : Error("missing subcorrector " + which) {}
};

/// Log-log fit input was unusable (too few or non-positive points).
struct DegeneratePoints : Error {
  explicit DegeneratePoints(const std::string& why)
      : Error("degenerate fit points: " + why) {}
};

/// Configuration file failed schema validation.
struct ConfigError : Error {
  explicit ConfigError(const std::string& why)
      : Error("config error: " + why) {}
};

/// Too many Monte-Carlo samples failed to solve.
struct PartialFailure : Error {
  PartialFailure(std::size_t failed, std::size_t total)
      : Error("sample failures exceed 10%: " + std::to_string(failed) + "/" +
              std::to_string(total)),
        failed(failed), total(total) {}
  std::size_t failed;
  std::size_t total;
};

}  // namespace clab
