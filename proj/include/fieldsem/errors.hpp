#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fieldsem {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  invalid_input = 1,
  imputation_stall = 2,
  fit_degenerate = 3,
  information_not_pd = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Parameters outside the family's domain (nonpositive scale, non-PD covariance, ...).
class ParameterDomainError : public Error {
 public:
  explicit ParameterDomainError(const std::string& what) : Error(ExitCode::invalid_input, what) {}
};

// Argument outside the support of an operation (quantile level, nonpositive coordinate).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ExitCode::invalid_input, what) {}
};

class FitDegenerateError : public Error {
 public:
  explicit FitDegenerateError(const std::string& what) : Error(ExitCode::fit_degenerate, what) {}
};

class ImputationStallError : public Error {
 public:
  ImputationStallError(const std::string& what, double censor)
      : Error(ExitCode::imputation_stall, what), censor_(censor) {}
  double censor() const noexcept { return censor_; }

 private:
  double censor_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ExitCode::invalid_input, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ExitCode::invalid_input, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::invalid_input, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::invalid_input, what) {}
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double achieved)
      : Error(ExitCode::invalid_input, what), achieved_(achieved) {}
  double achieved_tolerance() const noexcept { return achieved_; }

 private:
  double achieved_;
};

class InformationError : public Error {
 public:
  explicit InformationError(const std::string& what) : Error(ExitCode::information_not_pd, what) {}
};

}  // namespace fieldsem
