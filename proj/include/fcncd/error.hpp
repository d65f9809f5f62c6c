#pragma once

#include <stdexcept>
#include <string>

namespace fcncd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates a domain invariant (bad id, malformed rank vector, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or parsed. The message carries file:line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace fcncd
