#pragma once

#include <stdexcept>
#include <string>

namespace sdl {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed network, parameter, or learner configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Failure while evaluating a frame: missing feature, non-finite input,
// broken episode ordering.
class EvalError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed input documents (datasets, logs, reports).
class InputError : public Error {
 public:
  using Error::Error;
};

// A decision log that refers to parameters the registry does not know.
class CorruptLogError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdl
