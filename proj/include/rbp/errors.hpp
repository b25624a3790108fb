#pragma once

#include <stdexcept>
#include <string>

namespace rbp {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes incompatible with the requested operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// A non-finite value appeared during evaluation. Carries the tape node
// index (or iteration/step index, depending on context).
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, long index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

// An iterative procedure failed to converge within its budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what + " (last residual " + std::to_string(last_residual) + ")"),
        last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_ = 0.0;
};

// Invalid configuration or malformed input file.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace rbp
