#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spc3d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

/// Matrix Market parse failure; `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class PlanError : public Error {
public:
  using Error::Error;
};

class OwnershipError : public Error {
public:
  using Error::Error;
};

class TransportError : public Error {
public:
  using Error::Error;
};

/// A blocking receive or collective timed out waiting for a peer.
class DeadlockError : public TransportError {
public:
  using TransportError::TransportError;
};

/// Raised in ranks that were blocked when another rank failed.
class AbortedError : public TransportError {
public:
  using TransportError::TransportError;
};

}  // namespace spc3d
