// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmte {

enum class ErrorKind {
  InvalidPoint,
  CapacityExceeded,
  DomainMismatch,
  DivergentIntegral,
  DegenerateDensity,
  UnsupportedElimination,
  NonInvertibleEquation,
  UnknownState,
  ParseError,
  UnknownVariable,
  NonlinearExpression,
  InvalidJoinTree,
  InconsistentEvidence,
  OracleDimension,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so that
// callers (the CLI in particular) can map families of errors to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace hmte
