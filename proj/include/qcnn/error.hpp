#pragma once

#include <stdexcept>
#include <string>

namespace qcnn {

// Base class for every error raised by the library. The CLI maps these to a
// single "error: <kind>: <message>" line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "parse"; }
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "schema"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

class LmBreakdown : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "lm"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

}  // namespace qcnn
