// errors.hpp -- exception types shared by every sprad module.
#pragma once

#include <stdexcept>
#include <string>

namespace sprad {

/// Base class of all sprad errors. `exit_code()` is the process status the
/// command-line tool reports for this error class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// A parameter set violates its invariants. The message names the field.
class ParameterError : public Error {
 public:
  ParameterError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }
  int exit_code() const noexcept override { return 2; }

 private:
  std::string field_;
};

/// Requested duration cannot hold a single emission cycle.
class EmptyStreamError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Input outside the domain where a quantity is defined.
class DomainError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Analog signal does not exceed its zero-flux reference.
class SignalBelowBackgroundError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Iterative fit failed to converge; message carries the last state.
class FitError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Normal matrix of a least-squares problem is singular.
class RankError : public FitError {
 public:
  using FitError::FitError;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace sprad
