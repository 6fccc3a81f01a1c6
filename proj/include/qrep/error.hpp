// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace qrep {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or length disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain an operation accepts (negative input to a
/// log quantizer, out-of-range code, hi < lo, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed container bytes or manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid or mismatched configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qrep
