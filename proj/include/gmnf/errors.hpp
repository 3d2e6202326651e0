// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gmnf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain an operation accepts (negative stddev,
/// threshold outside [0, 1], non-finite input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared inside a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: unknown keys, bad variants, empty suites.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not allow the call.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A request would exceed a configured resource limit.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmnf
