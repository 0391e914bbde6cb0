#pragma once

#include <stdexcept>
#include <string>

namespace echonav {

/// Malformed input file (syntax or schema).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Storage-level failure: I/O error or a corrupt container.
class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptionError : public StorageError {
 public:
  using StorageError::StorageError;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No qualifying episodes can be drawn from a scene.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace echonav
