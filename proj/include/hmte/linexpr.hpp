// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <quadmath.h>

#include <map>
#include <string>
#include <vector>

namespace hmte {

using VarId = std::string;
using Point = std::map<VarId, double>;
// Scalar type of coefficients.  Quadruple precision keeps the cancellation
// between antiderivative terms with a small exponential rate below the
// double rounding level.
using Real = __float128;

inline Real real_exp(Real x) { return expq(x); }
inline Real real_sqrt(Real x) { return sqrtq(x); }

/// An affine form  sum_j c_j * x_j + constant.  Coefficients with magnitude
/// below kZeroEps are dropped on construction.
class LinExpr {
 public:
  LinExpr() = default;
  explicit LinExpr(Real constant) : constant_(constant) {}
  LinExpr(std::map<VarId, Real> coeffs, Real constant);

  static LinExpr variable(const VarId& v, Real coeff = 1.0);

  const std::map<VarId, Real>& coeffs() const { return coeffs_; }
  Real constant() const { return constant_; }
  Real coeff(const VarId& v) const;
  bool has(const VarId& v) const { return coeffs_.count(v) > 0; }
  bool is_constant() const { return coeffs_.empty(); }
  std::vector<VarId> vars() const;

  Real evaluate(const Point& p) const;

  // Replaces v by e.  A no-op when v is absent.
  LinExpr substitute(const VarId& v, const LinExpr& e) const;
  LinExpr without(const VarId& v) const;

  // Solves  *this == 0  for v.  Requires a nonzero coefficient on v.
  LinExpr solve_for(const VarId& v) const;

  // Euclidean norm of the coefficient vector (constant excluded).
  Real norm() const;

  LinExpr operator-() const;
  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(Real s);

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, Real s) { return a *= s; }
  friend LinExpr operator*(Real s, LinExpr a) { return a *= s; }

  // Exact structural equality.
  bool operator==(const LinExpr& o) const = default;
  bool approx_equal(const LinExpr& o, Real tol) const;

  // Human-readable, e.g. "0.25*Z1 + 1".  Round-trips through the expression
  // parser with full Real precision.
  std::string to_string() const;

 private:
  void prune();

  std::map<VarId, Real> coeffs_;
  Real constant_ = 0.0;
};

}  // namespace hmte
