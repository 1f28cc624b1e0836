#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toxbuster {

/// Malformed input record (JSON, JSONL, checkpoint header).
class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, const std::string &what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string &what) : std::runtime_error(what) {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_ = 0;
};

/// Input is well-formed but violates a data invariant (duplicates, bounds, truncation).
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration supplied by the caller.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared inside a computation.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// State-machine conflict, e.g. deciding an already decided flag.
class ConflictError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace toxbuster
