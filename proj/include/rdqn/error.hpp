#ifndef RDQN_ERROR_HPP
#define RDQN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace rdqn {

/// Malformed argument: wrong length, non-finite value, out-of-range index.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (epsilon range,
/// division by a zero behavior probability).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Sampling from a replay memory that holds no transitions.
class EmptyMemory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a protocol, e.g. stepping an environment whose episode ended.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration text could not be parsed. `line()` is 1-based, 0 when the
/// problem is not tied to a line (e.g. a missing key).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rdqn

#endif  // RDQN_ERROR_HPP
