#pragma once

#include <stdexcept>
#include <string>

namespace sfd {

/// Base for every error this library throws deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller handed us a value outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Bad configuration: unknown keys, malformed URLs, HTTP 4xx, missing files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shapes of tensors / observations do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Transient failure talking to a remote planner; safe to retry.
class NetworkError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfd
