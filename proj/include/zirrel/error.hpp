#pragma once

#include <stdexcept>

namespace zirrel {

/// Malformed input or violated precondition. The CLI maps it to exit code 2.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A brute-force enumeration would exceed its size budget.
class BudgetExceeded : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// An iterative computation did not converge. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failure. Exit code 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace zirrel
