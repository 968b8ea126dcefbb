#pragma once

#include <stdexcept>
#include <string>

namespace evcn {

// Base for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched or malformed tensor shapes, bad arguments to an op.
class ShapeError : public Error {
public:
  using Error::Error;
};

// An op produced a non-finite value from finite inputs, or was fed a value
// outside its numeric domain.
class NumericError : public Error {
public:
  using Error::Error;
};

// Invalid user-facing input: bad config, malformed targets, empty dataset.
class ValidationError : public Error {
public:
  using Error::Error;
};

// File IO failures: missing files, bad magic, truncation.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace evcn
