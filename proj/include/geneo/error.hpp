// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace geneo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable/unwritable files and malformed file contents (exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or gradients (exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint version, schema or invariant problems (exit code 5).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Kernel parameters outside the domain where the kernel is defined.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Incompatible grid, kernel or buffer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace geneo
