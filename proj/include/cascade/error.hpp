#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cascade {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message is prefixed with the offending line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Wire-level failure talking to an external scorer.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace cascade
