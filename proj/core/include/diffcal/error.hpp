#pragma once

#include <stdexcept>
#include <string>

namespace diffcal {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (shapes, files, configs).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Operation not defined for the given shape representation.
class UnsupportedRepresentation : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Any failure of a numerical procedure (blow-up, factorization, no mixing).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class IntegrationFailure : public NumericalFailure {
 public:
  IntegrationFailure(const std::string& what, int step)
      : NumericalFailure(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace diffcal
