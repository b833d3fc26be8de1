// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/error.hpp"

namespace hmte {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidPoint: return "InvalidPoint";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::DomainMismatch: return "DomainMismatch";
    case ErrorKind::DivergentIntegral: return "DivergentIntegral";
    case ErrorKind::DegenerateDensity: return "DegenerateDensity";
    case ErrorKind::UnsupportedElimination: return "UnsupportedElimination";
    case ErrorKind::NonInvertibleEquation: return "NonInvertibleEquation";
    case ErrorKind::UnknownState: return "UnknownState";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownVariable: return "UnknownVariable";
    case ErrorKind::NonlinearExpression: return "NonlinearExpression";
    case ErrorKind::InvalidJoinTree: return "InvalidJoinTree";
    case ErrorKind::InconsistentEvidence: return "InconsistentEvidence";
    case ErrorKind::OracleDimension: return "OracleDimension";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace hmte
