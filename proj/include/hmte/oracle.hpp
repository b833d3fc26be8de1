// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "hmte/jointree.hpp"
#include "hmte/linexpr.hpp"
#include "hmte/model.hpp"

namespace hmte {

// Brute-force reference computations that share nothing with the join tree
// beyond the model file.

struct QuadratureSpec {
  int points_per_axis = 2001;  // odd, at least 3
  // Integration interval per free variable.  Missing entries default to the
  // support implied by the densities.
  std::map<VarId, std::pair<double, double>> bounds;
};

struct OraclePosterior {
  double mean = 0.0;
  double variance = 0.0;
  double evidence_weight = 0.0;
  std::vector<double> probabilities;  // discrete target only, per state
};

// Posterior moments of v by summing over discrete configurations and
// integrating the joint density with composite Simpson rules.  A discrete
// target reports moments of its state index.
OraclePosterior quadrature_posterior(const Network& n, const Evidence& evidence, const VarId& v,
                                     const QuadratureSpec& spec = {});

// Ancestral samples, one row per draw and one column per variable in
// declaration order.  Discrete columns hold state indices.
std::vector<std::vector<double>> forward_sample(const Network& n, std::size_t count, std::uint64_t seed);

// Eliminates the listed variables from eqs (each read as eq = 0) by Gaussian
// elimination with partial pivoting.  Needs one more equation than
// eliminated variables; the result has unit coefficient on its
// lexicographically last variable.
LinExpr solve_linear_system(const std::vector<LinExpr>& eqs, const std::vector<VarId>& eliminate);

}  // namespace hmte
