#pragma once

#include <stdexcept>
#include <string>

namespace mgcg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries the line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class UnknownEntityError : public Error {
 public:
  explicit UnknownEntityError(const std::string& entity)
      : Error("unknown entity: " + entity) {}
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class AtEndError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input longer than a model's maximum length.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A goal-conditioned call was made without a previous goal.
class MissingGoalError : public Error {
 public:
  using Error::Error;
};

/// Operation that is only valid during training was called at inference.
class TrainingOnlyError : public Error {
 public:
  using Error::Error;
};

class SessionClosedError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgcg
