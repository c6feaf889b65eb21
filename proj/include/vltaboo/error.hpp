#pragma once

#include <stdexcept>
#include <string>

namespace vltaboo {

/// Base class of every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset files missing, malformed or inconsistent.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument or configuration breaks a precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Embedding backend failure. Transport failures are retryable; dimension
/// mismatches and lookup misses are not.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable = false)
      : Error(what), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

}  // namespace vltaboo
