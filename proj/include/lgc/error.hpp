// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception types shared by every lgc module.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace lgc {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Group-size array cannot be built for the requested (channels, groups).
class InvalidSchemeError : public Error {
public:
  using Error::Error;
};

class UnsupportedChannelsError : public Error {
public:
  using Error::Error;
};

class UnknownSchemeError : public Error {
public:
  using Error::Error;
};

/// Tensor shapes do not line up for an operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

class InvalidLayerError : public Error {
public:
  using Error::Error;
};

class InvalidSpecError : public Error {
public:
  using Error::Error;
};

/// NaN or Inf detected; the message names the offending node.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Bad labels, empty datasets, degenerate channels.
class DataError : public Error {
public:
  using Error::Error;
};

/// Dataset file missing, truncated or corrupt.
class IngestionError : public DataError {
public:
  using DataError::DataError;
};

class AugmentationConfigError : public Error {
public:
  using Error::Error;
};

class ScheduleExhaustedError : public Error {
public:
  using Error::Error;
};

class CheckpointError : public Error {
public:
  using Error::Error;
};

class ReportError : public Error {
public:
  using Error::Error;
};

} // namespace lgc
