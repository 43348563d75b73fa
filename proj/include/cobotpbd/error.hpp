#pragma once

#include <stdexcept>
#include <string>

namespace cobotpbd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RegistrationError : public Error {
 public:
  using Error::Error;
};

/// Frame lookups: unknown frames and frames not connected to the root.
class LookupError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class AttachError : public Error {
 public:
  using Error::Error;
};

class PatternError : public Error {
 public:
  using Error::Error;
};

class SessionError : public Error {
 public:
  using Error::Error;
};

}  // namespace cobotpbd
