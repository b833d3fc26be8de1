// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <vector>

namespace hmte::detail {

// Dense tableau simplex with Bland's rule for the tiny LPs behind region
// feasibility and redundancy tests.
//
// Maximises  c . x  subject to  A x + b >= 0  and  |x_j - x0_j| <= box,
// starting from a point x0 that satisfies every row.
struct LpSolution {
  std::vector<double> x;
  double value = 0.0;
};

LpSolution maximize_from(const std::vector<std::vector<double>>& A,
                         const std::vector<double>& b,
                         const std::vector<double>& c,
                         const std::vector<double>& x0, double box);

}  // namespace hmte::detail
