#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace tommy {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, empty or non-normalizable offset distribution.
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (e.g. q not in (0,1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Two messages whose true-time comparison is exactly undecidable.
class TieError : public Error {
 public:
  TieError(std::string first, std::string second)
      : Error("exact tie between '" + first + "' and '" + second + "'"),
        first_(std::move(first)),
        second_(std::move(second)) {}

  const std::string& first() const noexcept { return first_; }
  const std::string& second() const noexcept { return second_; }

 private:
  std::string first_;
  std::string second_;
};

// A caller broke a documented precondition (cyclic input to a topological
// sort, an order that disagrees with its tournament, duplicate ids, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnknownClient : public Error {
 public:
  explicit UnknownClient(const std::string& client)
      : Error("unknown client '" + client + "'") {}
};

// Per-client event stream went backwards in local time.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class WatermarkNotEstablished : public Error {
 public:
  explicit WatermarkNotEstablished(const std::string& client)
      : Error("watermark not established for client '" + client + "'") {}
};

// Malformed input file; carries the 1-based line number (0 when unknown).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid configuration; carries the offending field name.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace tommy
