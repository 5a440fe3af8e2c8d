#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace planvl {

// Base for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// A record or argument violates a documented invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error(message) {}
};

// Caller broke an operation precondition.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message) : Error(message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(message) {}
};

// Model output could not be parsed. Carries the raw text for audit; `line`
// is set when the failure is tied to a specific input line (1-based).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw_text = {}, long line = -1)
      : Error(message), raw_text_(std::move(raw_text)), line_(line) {}

  const std::string& raw_text() const { return raw_text_; }
  long line() const { return line_; }

 private:
  std::string raw_text_;
  long line_;
};

// Retryable transport-level failure (connection reset, timeout, 5xx).
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message) : Error(message) {}
};

// Retryable rate-limit response (HTTP 429).
class RateLimitError : public TransportError {
 public:
  explicit RateLimitError(const std::string& message) : TransportError(message) {}
};

// Non-retryable backend failure (auth, bad request, mock misconfiguration).
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& message) : Error(message) {}
};

// Wraps a failure with the pipeline stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace planvl
