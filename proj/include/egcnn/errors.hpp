#pragma once

#include <stdexcept>
#include <string>

namespace egcnn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition (bad config, hash mismatch,
// empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A review whose helpfulness label is undefined (zero total votes).
class LabelError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Malformed or incompatible artifact on disk.
class FormatError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Numerical failure during optimization (non-finite loss, NaN trap).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace egcnn
