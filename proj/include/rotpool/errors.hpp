#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rotpool {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual std::string_view kind() const noexcept = 0;
};

/// Malformed arguments: shape mismatches, off-simplex priors, negative data, NaN input.
class InvalidInput : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "InvalidInput"; }
};

/// A solver produced a non-finite intermediate. Carries the iteration at which
/// the failure was detected (-1 when not tied to an iteration) and a one-line
/// snapshot of the parameters in use.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, int iteration, std::string snapshot)
      : Error(iteration >= 0
                  ? what + " (iteration " + std::to_string(iteration) + "; " + snapshot + ")"
                  : what + " (" + snapshot + ")"),
        reason_(what),
        iteration_(iteration),
        snapshot_(std::move(snapshot)) {}

  std::string_view kind() const noexcept override { return "NumericalFailure"; }
  int iteration() const noexcept { return iteration_; }
  const std::string& snapshot() const noexcept { return snapshot_; }
  /// The message without the iteration and snapshot suffix.
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
  int iteration_;
  std::string snapshot_;
};

/// A transport plan with a zero row marginal; the conditional expectation is undefined.
class DegeneratePlan : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "DegeneratePlan"; }
};

}  // namespace rotpool
