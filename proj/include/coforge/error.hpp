#pragma once

#include <stdexcept>
#include <string>

namespace coforge {

// Exit-code families used by the command-line front end.
enum class ErrorKind { input = 1, infeasible = 2, divergence = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed files, invalid arguments, violated preconditions.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

// Zero-norm vectors and similar inputs for which the quantity is undefined.
class DegenerateError : public InputError {
 public:
  explicit DegenerateError(const std::string& what) : InputError(what) {}
};

class ShapeError : public InputError {
 public:
  explicit ShapeError(const std::string& what) : InputError(what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(ErrorKind::infeasible, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

}  // namespace coforge
