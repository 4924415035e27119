#pragma once

#include <stdexcept>
#include <string>

namespace fsu {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Class index outside [0, C), or no wrong label exists (C < 2).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

  /// Same error with `context` (usually a path) prefixed to the message.
  ParseError with_context(const std::string& context) const {
    return ParseError(context + ": " + what(), line_, Raw{});
  }

 private:
  struct Raw {};
  ParseError(const std::string& what, std::size_t line, Raw) : Error(what), line_(line) {}

  std::size_t line_;
};

/// Non-finite value produced where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Dataset partitioning (group split or forget selection) impossible.
class SplitError : public Error {
 public:
  using Error::Error;
};

/// Evaluation on an empty confusion matrix.
class EmptyEvalError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsu
