#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qsciml {

// Invalid sizes, flags or settings supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Indices or dimensions that do not fit the object they are applied to.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was violated (missing partial, empty batch).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or singular numerics. Carries a free-form location string.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string where = {})
      : std::runtime_error(where.empty() ? what : what + " at " + where),
        where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

// Time integration blew up. step() is the offending step index.
class InstabilityError : public NumericalError {
 public:
  InstabilityError(const std::string& what, std::size_t step)
      : NumericalError(what, "step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Reference data cannot normalise a metric or weight (all-zero slice, etc).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qsciml
