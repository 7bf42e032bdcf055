#pragma once

#include <stdexcept>
#include <string>

namespace kalbucy {

// Shapes of matrices/vectors passed to an operation do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite or otherwise unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the transport stepper when the regularized covariance cannot be
// factorized.
class SingularCovarianceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace kalbucy
