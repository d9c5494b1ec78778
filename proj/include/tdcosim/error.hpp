#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tdcosim {

/// Base for all errors raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, schema violations, invalid arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Parser failure with a 1-based source location.
class ParseError : public InputError {
 public:
  ParseError(int line, int column, const std::string& message) : ParseError(std::string(), line, column, message) {}
  ParseError(const std::string& source, int line, int column, const std::string& message)
      : InputError((source.empty() ? std::string() : source + ":") + std::to_string(line) + ":" +
                   std::to_string(column) + ": " + message),
        source_(source),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& source() const { return source_; }
  /// The diagnostic without its location prefix.
  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string source_;
  std::string message_;
  int line_;
  int column_;
};

/// Numerical failure: an iteration did not converge or a system was singular.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}

  /// Per-iteration residual (mismatch or voltage change) up to the failure.
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

class SingularNetworkError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateVoltageError : public NumericalError {
 public:
  DegenerateVoltageError(const std::string& what, int phase) : NumericalError(what), phase_(phase) {}
  /// 0, 1, 2 for phases a, b, c.
  int phase() const { return phase_; }

 private:
  int phase_;
};

class VoltageCollapseError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tdcosim
