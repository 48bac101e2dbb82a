#pragma once

#include <stdexcept>
#include <string>

namespace kf {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A base kernel references an input dimension the data does not have.
class DimensionError : public Error {
public:
  DimensionError(std::string leaf, int dim, int input_dim)
      : Error("kernel leaf " + leaf + " uses input dimension " +
              std::to_string(dim + 1) + " but the data has " +
              std::to_string(input_dim) + " dimension(s)"),
        leaf_(std::move(leaf)), dim_(dim), input_dim_(input_dim) {}

  const std::string& leaf() const { return leaf_; }
  int dim() const { return dim_; }
  int input_dim() const { return input_dim_; }

private:
  std::string leaf_;
  int dim_;
  int input_dim_;
};

// Cholesky factorization failed even at the largest admissible jitter.
class ConditioningError : public Error {
public:
  ConditioningError(std::string expression, double last_jitter)
      : Error("covariance matrix for " + expression +
              " is not positive definite (jitter up to " +
              std::to_string(last_jitter) + " tried)"),
        expression_(std::move(expression)), last_jitter_(last_jitter) {}

  const std::string& expression() const { return expression_; }
  double last_jitter() const { return last_jitter_; }

private:
  std::string expression_;
  double last_jitter_;
};

// Syntax error in the kernel expression language.
class ParseError : public Error {
public:
  ParseError(const std::string& message, int line, int column,
             std::string expected = {})
      : Error("parse error at " + std::to_string(line) + ":" +
              std::to_string(column) + ": " + message +
              (expected.empty() ? "" : " (expected " + expected + ")")),
        line_(line), column_(column), expected_(std::move(expected)) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& expected() const { return expected_; }

private:
  int line_;
  int column_;
  std::string expected_;
};

// Malformed or unreadable input data (CSV cells, model files, specs).
class DataError : public Error {
public:
  using Error::Error;
};

// Packed parameter vector does not fit the expression.
class ParamSizeError : public Error {
public:
  ParamSizeError(int expected, int actual)
      : Error("parameter vector has " + std::to_string(actual) +
              " entries, expression needs " + std::to_string(expected)),
        expected_(expected), actual_(actual) {}

  int expected() const { return expected_; }
  int actual() const { return actual_; }

private:
  int expected_;
  int actual_;
};

}  // namespace kf
