#pragma once

#include <stdexcept>
#include <string>

namespace condet {

/// Malformed input text (bad JSON syntax, wrong value types). Maps to exit code 2.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid input that violates a domain invariant. Maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a computation on already-validated data. Maps to exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace condet
