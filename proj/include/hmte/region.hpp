// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <optional>
#include <vector>

#include "hmte/linexpr.hpp"

namespace hmte {

// expr >= 0, or expr > 0 when strict.
struct Constraint {
  LinExpr expr;
  bool strict = false;

  bool satisfied_by(const Point& p) const;
  Constraint negated() const { return {-expr, !strict}; }
};

// A convex polytope (possibly unbounded) given by linear inequalities over an
// ordered set of variables.  Regions are always built through make(), which
// normalises every row to a unit normal, drops duplicate and redundant rows,
// and refuses regions whose interior is empty.
class Region {
 public:
  // The whole space over no variables.
  Region() = default;

  // Returns nullopt when the interior is empty (inradius <= kFeasibilityTol).
  // `collapsed` is set when a row degenerated to "0 >= 0" which happens when
  // a substitution maps a piece boundary onto the whole space.
  static std::optional<Region> make(std::vector<VarId> vars,
                                    std::vector<Constraint> constraints,
                                    bool* collapsed = nullptr);

  // Axis-aligned box lo_j <= x_j <= hi_j.
  static Region box(const std::vector<VarId>& vars, const std::vector<double>& lo,
                    const std::vector<double>& hi);

  const std::vector<VarId>& vars() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const Point& interior_point() const { return center_; }
  double inradius() const { return radius_; }

  bool contains(const Point& p) const;

  // True when every row mentions at most one variable.
  bool is_axis_aligned() const;

  // Structural equality of canonical forms (tol 1e-12 on normalised rows).
  bool same_as(const Region& o) const;

 private:
  std::vector<VarId> vars_;
  std::vector<Constraint> constraints_;
  Point center_;
  double radius_ = 0.0;
};

std::optional<Region> intersect(const Region& a, const Region& b);

// a \ b as a list of interior-disjoint convex parts.
std::vector<Region> subtract(const Region& a, const Region& b);

// Preimage of r under v := e.  The result lives over (vars \ {v}) U vars(e).
std::optional<Region> substitute(const Region& r, const VarId& v, const LinExpr& e,
                                 bool* collapsed = nullptr);

}  // namespace hmte
