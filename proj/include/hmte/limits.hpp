// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>

namespace hmte {

/// Numeric tolerances shared by the piecewise algebra.
inline constexpr double kZeroEps = 1e-12;         // "is this coefficient zero"
inline constexpr double kFeasibilityTol = 1e-9;   // interior radius of a region

/// Capacity caps. A violated cap is reported as CapacityExceeded rather than
/// approximated away.
struct Limits {
  std::size_t max_pieces = 10000;
  int max_degree = 8;
  std::size_t max_vars = 4;
};

/// Process-wide limits. The first call reads HYBRID_MTE_MAX_PIECES.
const Limits& limits();
void set_limits(const Limits& l);

}  // namespace hmte
