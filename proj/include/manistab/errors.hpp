#pragma once

#include <stdexcept>
#include <string>

namespace manistab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: wrong dimensions, invalid ids, malformed files. The CLI maps
/// these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap. The CLI maps this to exit code 3.
class NotConverged : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IndexOutOfRange : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DisconnectedGraph : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NodeSetMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class OracleCapExceeded : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IsolatedNode : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ZeroCut : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InfeasibleBudget : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NegativeEntry : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotADistribution : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace manistab
