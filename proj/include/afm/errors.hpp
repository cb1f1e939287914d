#pragma once

#include <stdexcept>
#include <string>

namespace afm {

// Base of every error raised by the library. Callers that only need to
// report a failure can catch this; the HTTP layer maps subclasses to codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

// Raised by enqueue when the generation queue is full.
class BackPressureError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace afm
