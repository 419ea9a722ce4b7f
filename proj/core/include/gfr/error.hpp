// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gfr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are not conformable.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside an operation's mathematical domain (log of <= 0,
/// BCE target outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the call itself was violated (non-scalar backward root,
/// missing loss term, T <= 0, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Lookup of a class that has not been seen (or does not exist).
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Malformed feature file, manifest or checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gfr
