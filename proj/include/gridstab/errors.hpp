#pragma once

#include <stdexcept>
#include <string>

namespace gridstab {

/// Root of all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input: unreadable file, malformed document, schema or validation failure.
class InputError : public Error {
  public:
    using Error::Error;
};

class ParseError : public InputError {
  public:
    ParseError(std::string const& message, std::size_t line, std::size_t column)
        : InputError("syntax error at line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

  private:
    std::size_t line_;
    std::size_t column_;
};

class SchemaError : public InputError {
  public:
    SchemaError(std::string const& location, std::string const& message)
        : InputError("schema error at " + (location.empty() ? std::string("/") : location) + ": " +
                     message),
          location_(location) {}

    std::string const& location() const { return location_; }

  private:
    std::string location_;
};

/// A numerical stage failed on otherwise valid input.
class ComputationError : public Error {
  public:
    using Error::Error;
};

class PowerFlowError : public ComputationError {
  public:
    explicit PowerFlowError(std::string const& detail)
        : ComputationError("power flow did not converge: " + detail) {}
};

class SingularMatrixError : public ComputationError {
  public:
    using ComputationError::ComputationError;
};

class EigenSolverError : public ComputationError {
  public:
    using ComputationError::ComputationError;
};

class BlowUpError : public ComputationError {
  public:
    explicit BlowUpError(double time)
        : ComputationError("simulation blew up at t = " + std::to_string(time) + " s"),
          time_(time) {}

    double time() const { return time_; }

  private:
    double time_;
};

}  // namespace gridstab
