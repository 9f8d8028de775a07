#pragma once

#include <stdexcept>
#include <string>

namespace cropsits {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// branch to a fixed exit code: UsageError -> 2, DataError -> 3,
// ContractError -> 4.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad invocation: unparseable flags, unknown format tokens.
struct UsageError : Error {
  using Error::Error;
};

// Problems with files and on-disk payloads.
struct DataError : Error {
  using Error::Error;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct TruncationError : DataError {
  using DataError::DataError;
};

struct SchemaError : DataError {
  using DataError::DataError;
};

struct UnknownBandError : DataError {
  using DataError::DataError;
};

struct IoError : DataError {
  using DataError::DataError;
};

// Violated API preconditions and invariants.
struct ContractError : Error {
  using Error::Error;
};

struct DimensionError : ContractError {
  using ContractError::ContractError;
};

// Train/validation parcel overlap. Always a hard failure.
struct LeakageError : ContractError {
  using ContractError::ContractError;
};

}  // namespace cropsits
