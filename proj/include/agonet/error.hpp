#pragma once

#include <stdexcept>
#include <string>

namespace agonet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (bad length, bad magic, unparseable line, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inputs outside an operation's domain (empty cloud, zero dimension, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Config file problems; the message carries the offending line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace agonet
