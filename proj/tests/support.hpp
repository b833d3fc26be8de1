// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hmte/piecewise.hpp"

namespace hmte::test {

inline LinExpr var(const VarId& v, double c = 1.0) { return LinExpr::variable(v, c); }
inline LinExpr num(double c) { return LinExpr(c); }

// lo <= e < hi (or <= hi when closed).
inline std::vector<Constraint> between(const LinExpr& e, double lo, double hi, bool closed = true) {
  return {{e - num(lo), false}, {num(hi) - e, !closed}};
}

inline Region make_region(std::vector<VarId> vars, std::vector<Constraint> cs) {
  auto r = Region::make(std::move(vars), std::move(cs));
  if (!r) throw std::logic_error("empty fixture region");
  return *r;
}

// The two-piece normal approximation with the published constants, written
// out term by term for N(mean, sd^2).
inline PiecewiseFn normal_template(const VarId& z, double mean = 0.0, double sd = 1.0) {
  const double a0 = -0.010592900, a[3] = {197.5892111, -462.6885096, 265.5099139};
  const double b[3] = {2.2568434, 2.3434117, 2.4043270};
  const LinExpr u = (var(z) - num(mean)) * (1.0 / sd);
  std::vector<Piece> pieces;
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;  // left piece uses +b
    std::vector<ExpPolyTerm> terms{{a0 / sd, {}, LinExpr()}};
    for (int i = 0; i < 3; ++i) terms.push_back({a[i] / sd, {}, u * (sign * b[i])});
    auto cs = side == 0 ? between(u, -3.0, 0.0, false) : between(u, 0.0, 3.0, true);
    pieces.push_back({make_region({z}, cs), terms});
  }
  return PiecewiseFn({z}, pieces);
}

// Breakpoints of f along v with the other coordinates fixed at x.
inline std::vector<double> breakpoints(const PiecewiseFn& f, const VarId& v, const Point& x) {
  std::vector<double> out;
  for (const auto& pc : f.pieces()) {
    for (const auto& c : pc.region.constraints()) {
      const double a = c.expr.coeff(v);
      if (std::abs(a) < 1e-15) continue;
      Point y = x;
      y[v] = 0.0;
      out.push_back(-c.expr.evaluate(y) / a);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Adaptive Gauss-Kronrod quadrature of v -> f(x, v) split at every piece
// boundary.  Only bounded supports are handled.
inline double quad_along(const PiecewiseFn& f, const VarId& v, const Point& x) {
  auto bp = breakpoints(f, v, x);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    if (bp[i + 1] - bp[i] < 1e-14) continue;
    auto g = [&](double t) {
      Point y = x;
      y[v] = t;
      return evaluate(f, y);
    };
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, bp[i], bp[i + 1], 6,
                                                                           1e-13);
  }
  return total;
}

// Random MTE-with-monomials terms with moderate rates.
inline std::vector<ExpPolyTerm> random_terms(std::mt19937& rng, const std::vector<VarId>& vars,
                                             int count, bool monomials) {
  std::uniform_real_distribution<double> coef(0.2, 2.0), rate(-1.2, 1.2);
  std::uniform_int_distribution<int> pw(0, 2);
  std::vector<ExpPolyTerm> out;
  for (int k = 0; k < count; ++k) {
    ExpPolyTerm t;
    t.coeff = coef(rng);
    std::map<VarId, Real> rates;
    for (const auto& v : vars) rates[v] = rate(rng);
    t.exp_arg = LinExpr(rates, 0.0);
    if (monomials)
      for (const auto& v : vars)
        if (int p = pw(rng)) t.powers[v] = p;
    out.push_back(t);
  }
  return out;
}

// Positive two-variable fixture: a box split by a slanted line.
inline PiecewiseFn fixture_2d(std::mt19937& rng, bool monomials = false) {
  const std::vector<VarId> vs{"a", "b"};
  std::vector<Constraint> box = between(var("a"), 0.0, 1.0);
  for (auto& c : between(var("b"), -1.0, 1.5)) box.push_back(c);
  auto lower = box, upper = box;
  lower.push_back({num(1.2) - var("a") - var("b") * 0.5, false});
  upper.push_back({var("a") + var("b") * 0.5 - num(1.2), true});
  return PiecewiseFn(vs, {{make_region(vs, lower), random_terms(rng, vs, 2, monomials)},
                          {make_region(vs, upper), random_terms(rng, vs, 2, monomials)}});
}

// Three-variable fixture over a simplex-like polytope and a box.
inline PiecewiseFn fixture_3d(std::mt19937& rng) {
  const std::vector<VarId> vs{"a", "b", "c"};
  std::vector<Constraint> s{{var("a"), false},
                            {var("b") + num(0.5), false},
                            {var("c"), false},
                            {num(2.0) - var("a") - var("b") - var("c"), false}};
  std::vector<Constraint> box = between(var("a"), 2.5, 3.0);
  for (auto& c : between(var("b"), 0.0, 1.0)) box.push_back(c);
  for (auto& c : between(var("c"), -1.0, 0.0)) box.push_back(c);
  return PiecewiseFn(vs, {{make_region(vs, s), random_terms(rng, vs, 2, true)},
                          {make_region(vs, box), random_terms(rng, vs, 1, false)}});
}

inline Point random_point(std::mt19937& rng, const std::vector<VarId>& vars, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Point p;
  for (const auto& v : vars) p[v] = u(rng);
  return p;
}

}  // namespace hmte::test

namespace hmte::test {

// The standard template written directly as a formula.
inline double template_value(double u) {
  if (u < -3.0 || u > 3.0) return 0.0;
  const double s = u < 0.0 ? 1.0 : -1.0;
  return -0.0105929 + 197.5892111 * std::exp(s * 2.2568434 * u) -
         462.6885096 * std::exp(s * 2.3434117 * u) + 265.5099139 * std::exp(s * 2.4043270 * u);
}

// Integral of f over [lo, hi] split where any of the linear arguments
// crosses a template boundary.
inline double quad_split(const std::function<double(double)>& f,
                         const std::vector<std::function<double(double)>>& args, double lo, double hi) {
  std::vector<double> cuts{lo, hi};
  for (const auto& a : args) {
    const double a0 = a(0.0), slope = a(1.0) - a0;
    if (std::abs(slope) < 1e-15) continue;
    for (double b : {-3.0, 0.0, 3.0}) {
      const double x = (b - a0) / slope;
      if (x > lo && x < hi) cuts.push_back(x);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    if (cuts[i + 1] - cuts[i] > 1e-14)
      total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 8, 1e-14);
  return total;
}

}  // namespace hmte::test
