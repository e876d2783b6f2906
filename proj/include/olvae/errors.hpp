#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace olvae {

// Shape or dimensionality disagreement between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller violated an operation precondition (empty input, non-scalar loss, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Numeric input outside the operation's domain (non-positive variance, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Cholesky factorization hit a non-positive pivot.
struct NotPositiveDefiniteError : std::runtime_error {
  explicit NotPositiveDefiniteError(std::size_t pivot_index, double pivot_value)
      : std::runtime_error("matrix is not positive definite: pivot " +
                           std::to_string(pivot_index) + " = " +
                           std::to_string(pivot_value)),
        pivot(pivot_index) {}
  std::size_t pivot;
};

// Malformed file contents; message names the offending offset or field.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure with path context.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace olvae
