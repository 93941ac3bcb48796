#pragma once

#include <stdexcept>
#include <string>

namespace piezores {

/// Base of every error the toolkit throws on purpose. The CLI maps the
/// concrete type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: invalid parameters, malformed files, violated preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Text that could not be parsed. `line` is 1-based, 0 when not applicable.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : InputError(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    std::string out;
    if (line > 0) {
      out += "row " + std::to_string(line);
      if (column > 0) out += ", column " + std::to_string(column);
      out += ": ";
    }
    return out + what;
  }

  std::size_t line_;
  std::size_t column_;
};

/// A resonance (impedance minimum/maximum pair or conductance peak) is absent.
class NotFoundError : public InputError {
 public:
  using InputError::InputError;
};

/// An iterative solver exhausted its budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double final_residual)
      : Error(what + " (final residual " + std::to_string(final_residual) + ")"),
        final_residual_(final_residual) {}

  double final_residual() const noexcept { return final_residual_; }

 private:
  double final_residual_;
};

/// The requested converter operating point needs a negative stage duration.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An output failed its own consistency checks.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace piezores
