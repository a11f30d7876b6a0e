#pragma once

#include <stdexcept>
#include <string>

namespace dpt {

// Base for all library errors so callers can catch dpt::Error wholesale.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes do not match an operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

// A configuration value is invalid or inconsistent (bad preset field,
// non-divisible patch size, head count not dividing the width, ...).
struct ConfigError : Error {
  using Error::Error;
};

// An object was used in the wrong order (backward before forward, reusing a
// consumed cache, stepping an optimizer with mismatched parameters).
struct StateError : Error {
  using Error::Error;
};

// A runtime argument is invalid (NaN coordinate, label out of range).
struct ArgumentError : Error {
  using Error::Error;
};

// Filesystem-level failure (unreadable/unwritable path).
struct IoError : Error {
  using Error::Error;
};

// A file exists but its contents are not what the format requires.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace dpt
