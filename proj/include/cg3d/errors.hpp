#pragma once

#include <stdexcept>
#include <string>

namespace cg3d {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a type invariant (non-unit rotation, non-positive scale, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Scene graph is malformed: cycles, dangling ids, duplicate pairs, multiple anchor chains.
class SceneGraphError : public Error {
 public:
  using Error::Error;
};

/// An interaction is used before it has been initialized.
class StatusError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Monte-Carlo sampling could not produce a valid candidate.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// The guidance service failed, timed out, or returned something malformed.
class OracleError : public Error {
 public:
  using Error::Error;
};

/// Residuals were requested from a score-only oracle.
class CapabilityError : public OracleError {
 public:
  using OracleError::OracleError;
};

/// Schema violation in a scene document. `pointer()` is a JSON pointer to the offending node.
class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cg3d
