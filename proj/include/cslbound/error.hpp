#pragma once

#include <stdexcept>
#include <string>

namespace cslbound {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or configuration record.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An adaptive integration ran out of its evaluation budget before reaching
/// the requested tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double estimate, double error_estimate,
                  double rC = 0.0)
      : Error(what), estimate_(estimate), error_estimate_(error_estimate), rC_(rC) {}

  double estimate() const noexcept { return estimate_; }
  double error_estimate() const noexcept { return error_estimate_; }
  /// Correlation length the failing evaluation was run at (0 when unknown).
  double rC() const noexcept { return rC_; }

 private:
  double estimate_;
  double error_estimate_;
  double rC_;
};

/// Iterative fit did not converge within its iteration budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Normal equations of a least-squares problem are singular.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// Not enough usable points for the requested statistic or fit.
class TooFewPointsError : public Error {
 public:
  using Error::Error;
};

class UnsupportedWindowError : public Error {
 public:
  using Error::Error;
};

/// Requested precision is finer than the grid a construction was built on.
class GridResolutionError : public Error {
 public:
  using Error::Error;
};

/// A bracketing search found its optimum on the boundary.
class NoInteriorMaximumError : public Error {
 public:
  using Error::Error;
};

}  // namespace cslbound
