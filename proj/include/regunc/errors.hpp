#pragma once

#include <stdexcept>
#include <string>

namespace regunc {

// Non-finite input or a parameter outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller asked for something the API does not support (bad pair, empty set,
// length mismatch, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A quantity is mathematically undefined for the given input (PRR with equal
// oracle/random areas, tau_b on an all-tied vector).
class UndefinedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adaptive quadrature did not reach tolerance; carries the best estimate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_estimate, double error_estimate)
      : std::runtime_error(what), best_estimate_(best_estimate), error_estimate_(error_estimate) {}

  double best_estimate() const noexcept { return best_estimate_; }
  double error_estimate() const noexcept { return error_estimate_; }

 private:
  double best_estimate_;
  double error_estimate_;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t member)
      : std::runtime_error(what), member_(member) {}

  std::size_t member() const noexcept { return member_; }

 private:
  std::size_t member_;
};

// Malformed input document. line/column are 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace regunc
