#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sliver {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file lacks a required column or field.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::vector<std::size_t> lines = {})
      : Error(what), lines_(std::move(lines)) {}
  const std::vector<std::size_t>& lines() const { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

/// Rows are present but carry invalid values. lines() holds 1-based line numbers.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::size_t> lines = {})
      : Error(what), lines_(std::move(lines)) {}
  const std::vector<std::size_t>& lines() const { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

class InvalidSessionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class LeakageError : public Error {
 public:
  using Error::Error;
};

class OrderError : public Error {
 public:
  using Error::Error;
};

}  // namespace sliver
