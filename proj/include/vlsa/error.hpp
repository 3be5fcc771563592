#pragma once

#include <stdexcept>
#include <string>

namespace vlsa {

// Invalid configuration, flags, or arguments (CLI exit code 2).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File system and format failures (CLI exit code 1).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during training, e.g. a non-finite loss component.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vlsa
