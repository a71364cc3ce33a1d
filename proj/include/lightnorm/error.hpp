#pragma once

#include <stdexcept>
#include <string>

namespace lightnorm {

// Every error raised by the library derives from Error. The CLI maps each
// subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid format definition, unknown preset, or a value that is not
// representable in the format an operation requires.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes, element counts or cache layouts that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite input, empty channel, out-of-domain argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed input files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad configuration: unknown variant, missing calibration entry, etc.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lightnorm
