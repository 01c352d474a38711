#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace glab {

// Base for every error raised by the library. Subclasses name the failure
// category so callers (and the CLI) can react without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nonconforming tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an operation, or a diverging training run.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Zero-norm argument where a direction is required.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed binary container. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Capture produced by a different model than the one it is used with.
class MismatchError : public Error {
 public:
  using Error::Error;
};

class AmbiguousLabelError : public Error {
 public:
  using Error::Error;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace glab
