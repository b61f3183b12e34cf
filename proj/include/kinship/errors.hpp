#pragma once

#include <stdexcept>
#include <string>

namespace kinship {

// Malformed input text (index rows, manifest rows, config lines).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that breaks a data-model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mathematical precondition failure (zero norm, non-positive temperature, shape mismatch).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A runtime audit caught the sampler or trainer breaking one of its guarantees.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite loss during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kinship
