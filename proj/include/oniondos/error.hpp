#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oniondos {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or configuration value is out of range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input file does not follow the expected schema.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// No relay has positive weight for the requested position.
class NoEligibleRelay : public Error {
 public:
  using Error::Error;
};

/// The probe transport itself failed. This is never a circuit kill.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace oniondos
