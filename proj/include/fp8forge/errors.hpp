// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fp8forge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN (or otherwise unusable) value reached an operation that requires finite input.
class NonFiniteInputError : public Error {
 public:
  explicit NonFiniteInputError(const std::string& what, std::size_t index = 0)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public Error {
 public:
  using Error::Error;
};

class TruncatedPayloadError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long long step) : Error(what), step_(step) {}
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

// Backward was handed a cache that does not belong to the current parameters.
class StaleCacheError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fp8forge
