#pragma once

#include <stdexcept>
#include <string>

namespace flowguide {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (time out of range, point
/// outside the support, non-finite input).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A vector that must be normalized has (near) zero length.
class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or drift encountered during an iterative run.
class NumericError : public Error {
 public:
  using Error::Error;
};

class EnvelopeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint magic/version mismatch or malformed header.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Header shapes disagree with each other or with the architecture record.
class ShapeMetadataError : public Error {
 public:
  using Error::Error;
};

/// Bad user input: config file, CSV, potential text, flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowguide
