#pragma once

#include <stdexcept>
#include <string>

namespace mtpsr {

// All library failures derive from Error so callers (the CLI) can map them to
// exit codes by category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches between operators, vectors or spaces.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A model produced a value that no valid PSR can produce (negative
// probability, conditional law that fails to normalize, ...).
class ModelIntegrityError : public Error {
 public:
  using Error::Error;
};

class DegenerateHistoryError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyClassError : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtpsr
