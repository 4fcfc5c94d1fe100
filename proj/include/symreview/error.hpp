#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace symreview {

enum class ErrorKind {
  Io,
  Parse,
  Validation,
  CannotBalance,
  Selection,
  Budget,
  BackendUnavailable,
  Protocol,
  VerdictParse,
  Lookup,
  EmptyRun,
  UndefinedBaseline,
  IncomparableRuns,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::CannotBalance: return "cannot-balance";
    case ErrorKind::Selection: return "selection";
    case ErrorKind::Budget: return "budget";
    case ErrorKind::BackendUnavailable: return "backend-unavailable";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::VerdictParse: return "verdict-parse";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::EmptyRun: return "empty-run";
    case ErrorKind::UndefinedBaseline: return "undefined-baseline";
    case ErrorKind::IncomparableRuns: return "incomparable-runs";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure with an optional 1-based line number (0 = unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : Error(ErrorKind::Parse, line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-2xx reply from a classification endpoint.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& message)
      : Error(ErrorKind::Protocol, "status " + std::to_string(status) + ": " + message),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace symreview
