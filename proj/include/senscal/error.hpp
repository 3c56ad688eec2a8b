// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception hierarchy shared by every senscal module.
 *
 * Each error kind maps onto one CLI exit code (see cli/app.hpp).
 */
#pragma once

#include <stdexcept>
#include <string>

namespace senscal {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A hyperparameter or argument is outside its valid range.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// A call violated an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
  using Error::Error;
};

/// Malformed input data: CSV rows, timestamps, empty frames.
class DataError : public Error {
public:
  using Error::Error;
};

/// Binary checkpoint or report could not be decoded.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// NaN or Inf produced by a numeric operation.
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace senscal
