#pragma once

#include <stdexcept>
#include <string>

namespace pomdp_dtr {

/// Base class for all library errors. `exit_code()` maps onto the CLI
/// contract: 2 validation, 3 numerical, 4 I/O.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept = 0;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Covariance matrix failed Cholesky factorization.
class NonSpdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Filter hit a zero (or non-finite) normalizing constant.
class DegenerateObservationError : public NumericalError {
 public:
  DegenerateObservationError(const std::string& what, int visit)
      : NumericalError(what), visit_(visit) {}
  int visit() const noexcept { return visit_; }

 private:
  int visit_;
};

/// Estimating-equation system too ill-conditioned to solve.
class IllPosedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace pomdp_dtr
