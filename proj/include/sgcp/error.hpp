#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgcp {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bracketed tree text. `offset()` is the character position of
/// the first offending character (or the input length on premature end).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Bad or inconsistent input data (missing lines, misaligned files, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatches and non-finite values in numeric code.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid command-line or configuration usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgcp
