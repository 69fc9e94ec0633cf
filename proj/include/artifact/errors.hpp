#pragma once

#include <stdexcept>
#include <string>

namespace artifact {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed structured input (taxonomy file, dataset JSON, checkpoint).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Input is well-formed but violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during sampling or optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or file format version this build does not understand.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace artifact
