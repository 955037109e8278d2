#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ldr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content. `where` names the file plus a byte offset or line.
class FormatError : public Error {
 public:
  FormatError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Bad user configuration: unknown keys, invalid values, inconsistent modes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or map dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& tensor)
      : Error("non-finite gradient in tensor '" + tensor + "'"), tensor_(tensor) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace ldr
