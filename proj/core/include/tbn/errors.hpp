#pragma once

#include <stdexcept>
#include <string>

namespace tbn {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/rank mismatch between tensors or against an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-range element or frame access.
class IndexError : public Error {
 public:
  using Error::Error;
};

// An operation precondition was violated (bad stride, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file content (datasets, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or unsatisfiable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Runtime failure during optimization (non-finite gradients, ...).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbn
