#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iterflow {

// Bad arguments or configuration. The CLI maps these to exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while reading or parsing a point-cloud / field file.
class CloudFormatError : public std::runtime_error {
 public:
  enum class Kind { io, header, ragged, non_numeric, non_finite, empty };

  CloudFormatError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  // 1-based line (csv) or 0 when not applicable.
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

// Numerical breakdown: non-finite states, indefinite systems, solver failure under abort policy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iterflow
