// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hmte/linexpr.hpp"
#include "hmte/region.hpp"

namespace hmte {

using Powers = std::map<VarId, int>;

/// coeff * prod_j x_j^powers[j] * exp(exp_arg(x)).
///
/// Plain mixture-of-truncated-exponential terms have empty `powers`; the
/// monomial factor is what keeps the class closed when a variable is
/// integrated between limits that depend linearly on the remaining variables.
struct ExpPolyTerm {
  Real coeff = 0.0;
  Powers powers;
  LinExpr exp_arg;

  int degree() const;
  Real evaluate(const Point& p) const;
};

struct Piece {
  Region region;
  std::vector<ExpPolyTerm> terms;
};

/// A function that is a sum of ExpPolyTerms on each of a list of
/// interior-disjoint polytopes and zero elsewhere.  On shared boundaries the
/// first piece in list order wins.
class PiecewiseFn {
 public:
  PiecewiseFn() = default;  // zero function over no variables

  // Canonicalises term lists and enforces the capacity limits.  The caller
  // guarantees that piece regions are interior-disjoint.
  PiecewiseFn(std::vector<VarId> vars, std::vector<Piece> pieces);

  static PiecewiseFn identity();
  static PiecewiseFn constant(Real c);
  // A single piece over `region` with the given terms.
  static PiecewiseFn on_region(const Region& region, std::vector<ExpPolyTerm> terms);

  const std::vector<VarId>& vars() const { return vars_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  bool has_var(const VarId& v) const;
  bool is_scalar() const { return vars_.empty(); }
  // Value of a function over no variables.
  double scalar_value() const;
  bool is_mte() const;  // every term has empty powers
  int max_degree() const;
  std::size_t term_count() const;

  std::string to_string() const;

 private:
  std::vector<VarId> vars_;
  std::vector<Piece> pieces_;
};

double evaluate(const PiecewiseFn& f, const Point& p);

PiecewiseFn scale(const PiecewiseFn& f, double s);
PiecewiseFn multiply(const PiecewiseFn& f, const PiecewiseFn& g);
// Pointwise sum over the union of the variable sets.
PiecewiseFn add(const PiecewiseFn& f, const PiecewiseFn& g);
// Pointwise sum of w_i * f_i; all f_i must share one variable set.
PiecewiseFn weighted_sum(const std::vector<std::pair<double, PiecewiseFn>>& terms);

// f with v replaced by e everywhere (regions, exponents and monomials).
PiecewiseFn substitute_linear(const PiecewiseFn& f, const VarId& v, const LinExpr& e);

// Integral of f over v along the whole real line, in closed form.
PiecewiseFn eliminate_integrate(const PiecewiseFn& f, const VarId& v);

double definite_integral(const PiecewiseFn& f);

// E[v^order] of the normalised univariate function f (order 1 or 2).
double moment(const PiecewiseFn& f, const VarId& v, int order);

// Smallest interval containing the support of a univariate function.
std::pair<double, double> support_interval(const PiecewiseFn& f);

}  // namespace hmte
