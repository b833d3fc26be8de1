// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {

namespace {

using Poly = std::map<Powers, Real>;

Powers add_powers(Powers a, const Powers& b) {
  for (const auto& [v, k] : b) a[v] += k;
  return a;
}

int total_degree(const Powers& p) {
  int d = 0;
  for (const auto& [v, k] : p) d += k;
  return d;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) out[add_powers(ma, mb)] += ca * cb;
  return out;
}

// (e)^k expanded into monomials.
Poly poly_pow(const LinExpr& e, int k) {
  Poly base;
  if (e.constant() != 0.0) base[{}] = e.constant();
  for (const auto& [v, c] : e.coeffs()) base[{{v, 1}}] = c;
  Poly out{{Powers{}, 1.0}};
  for (int i = 0; i < k; ++i) out = poly_mul(out, base);
  return out;
}

void check_degree(const ExpPolyTerm& t) {
  if (t.degree() > limits().max_degree)
    raise(ErrorKind::CapacityExceeded,
          "term degree " + std::to_string(t.degree()) + " exceeds " +
              std::to_string(limits().max_degree));
}

bool term_key_less(const ExpPolyTerm& a, const ExpPolyTerm& b) {
  if (a.powers != b.powers) return a.powers < b.powers;
  if (a.exp_arg.coeffs() != b.exp_arg.coeffs()) return a.exp_arg.coeffs() < b.exp_arg.coeffs();
  return a.exp_arg.constant() < b.exp_arg.constant();
}

// Exponent rates that differ only by rounding noise are merged.
bool term_key_equal(const ExpPolyTerm& a, const ExpPolyTerm& b) {
  if (a.powers != b.powers) return false;
  const auto& ca = a.exp_arg.coeffs();
  const auto& cb = b.exp_arg.coeffs();
  if (ca.size() != cb.size()) return false;
  for (auto ia = ca.begin(), ib = cb.begin(); ia != ca.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (std::abs(ia->second - ib->second) > 1e-14 * (1.0 + std::abs(ia->second))) return false;
  }
  return a.exp_arg.constant() == b.exp_arg.constant();
}

std::vector<ExpPolyTerm> canonical_terms(std::vector<ExpPolyTerm> terms) {
  // Moderate exponent offsets are folded into the coefficient.
  for (auto& t : terms) {
    const Real c = t.exp_arg.constant();
    if (c != 0.0 && std::abs(c) <= 500.0) {
      t.coeff *= real_exp(c);
      t.exp_arg -= LinExpr(c);
    }
  }
  std::sort(terms.begin(), terms.end(), term_key_less);
  std::vector<ExpPolyTerm> out;
  for (auto& t : terms) {
    if (!out.empty() && term_key_equal(out.back(), t))
      out.back().coeff += t.coeff;
    else
      out.push_back(std::move(t));
  }
  std::erase_if(out, [](const ExpPolyTerm& t) { return t.coeff == 0.0; });
  return out;
}

std::vector<ExpPolyTerm> concat(std::vector<ExpPolyTerm> a, const std::vector<ExpPolyTerm>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return canonical_terms(std::move(a));
}

std::vector<VarId> union_vars(std::vector<VarId> a, const std::vector<VarId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

void check_piece_count(std::size_t n) {
  if (n > limits().max_pieces)
    raise(ErrorKind::CapacityExceeded, "piece count " + std::to_string(n) + " exceeds " +
                                           std::to_string(limits().max_pieces));
}

// Adds `p` into the interior-disjoint arrangement `acc`, refining regions so
// the result stays interior-disjoint.
void overlay_insert(std::vector<Piece>& acc, Piece p) {
  std::vector<Piece> out;
  out.reserve(acc.size() + 2);
  std::vector<Region> rest{p.region};
  for (auto& q : acc) {
    if (q.region.same_as(p.region)) {
      out.push_back({q.region, concat(q.terms, p.terms)});
      rest.clear();
      continue;
    }
    auto inter = intersect(q.region, p.region);
    if (!inter) {
      out.push_back(std::move(q));
      continue;
    }
    out.push_back({*inter, concat(q.terms, p.terms)});
    for (auto& part : subtract(q.region, p.region)) out.push_back({std::move(part), q.terms});
    std::vector<Region> next;
    for (const auto& r : rest)
      for (auto& part : subtract(r, q.region)) next.push_back(std::move(part));
    rest = std::move(next);
    check_piece_count(out.size() + rest.size());
  }
  for (auto& r : rest) out.push_back({std::move(r), p.terms});
  std::erase_if(out, [](const Piece& x) { return x.terms.empty(); });
  check_piece_count(out.size());
  acc = std::move(out);
}

// Replaces v by e in one term; monomial powers of v expand into a sum.
std::vector<ExpPolyTerm> substitute_term(const ExpPolyTerm& t, const VarId& v, const LinExpr& e) {
  const auto it = t.powers.find(v);
  const int k = it == t.powers.end() ? 0 : it->second;
  Powers base = t.powers;
  base.erase(v);
  const LinExpr arg = t.exp_arg.substitute(v, e);
  std::vector<ExpPolyTerm> out;
  for (const auto& [mono, c] : poly_pow(e, k)) {
    ExpPolyTerm nt{t.coeff * c, add_powers(base, mono), arg};
    check_degree(nt);
    out.push_back(std::move(nt));
  }
  return out;
}

// Terms of  F(B)  where F is an antiderivative in v of the term and B a bound.
// Returns nullopt for an infinite bound at which the antiderivative vanishes;
// throws when it does not.
std::vector<ExpPolyTerm> antiderivative_at(const ExpPolyTerm& t, const VarId& v,
                                           const std::optional<LinExpr>& bound, bool upper) {
  const auto it = t.powers.find(v);
  const int k = it == t.powers.end() ? 0 : it->second;
  Powers base = t.powers;
  base.erase(v);
  const Real beta = t.exp_arg.coeff(v);
  const LinExpr rest = t.exp_arg.without(v);

  if (!bound) {
    // Antiderivative tends to zero at +inf only for decaying exponentials.
    const bool decays = upper ? beta < 0.0 : beta > 0.0;
    if (!decays)
      raise(ErrorKind::DivergentIntegral,
            "integral over " + v + " is unbounded " + (upper ? "above" : "below"));
    return {};
  }

  std::vector<ExpPolyTerm> out;
  if (beta == 0.0) {
    for (const auto& [mono, c] : poly_pow(*bound, k + 1)) {
      ExpPolyTerm nt{t.coeff * c / (k + 1), add_powers(base, mono), rest};
      check_degree(nt);
      out.push_back(std::move(nt));
    }
    return out;
  }
  // int v^k e^{beta v} dv = e^{beta v} sum_j (-1)^j k!/(k-j)! v^{k-j} / beta^{j+1}
  const LinExpr arg = rest + (*bound) * beta;
  Real falling = 1.0;  // k!/(k-j)!
  Real beta_pow = beta;
  for (int j = 0; j <= k; ++j) {
    const Real sign = (j % 2 == 0) ? 1.0 : -1.0;
    const Real factor = sign * falling / beta_pow;
    for (const auto& [mono, c] : poly_pow(*bound, k - j)) {
      ExpPolyTerm nt{t.coeff * factor * c, add_powers(base, mono), arg};
      check_degree(nt);
      out.push_back(std::move(nt));
    }
    falling *= (k - j);
    beta_pow *= beta;
  }
  return out;
}

// Integrates one piece over v; returns interior-disjoint cells over the
// remaining variables.
std::vector<Piece> integrate_piece(const Piece& piece, const VarId& v,
                                   const std::vector<VarId>& remaining) {
  std::vector<Constraint> rest;
  std::vector<LinExpr> lowers, uppers;
  for (const auto& c : piece.region.constraints()) {
    const double a = c.expr.coeff(v);
    if (a == 0.0) {
      rest.push_back(c);
    } else if (a > 0.0) {
      lowers.push_back(c.expr.solve_for(v));  // v >= L(x)
    } else {
      uppers.push_back(c.expr.solve_for(v));  // v <= U(x)
    }
  }

  std::vector<std::optional<LinExpr>> lo_opts, hi_opts;
  if (lowers.empty()) lo_opts.push_back(std::nullopt);
  for (auto& l : lowers) lo_opts.emplace_back(l);
  if (uppers.empty()) hi_opts.push_back(std::nullopt);
  for (auto& u : uppers) hi_opts.emplace_back(u);

  std::vector<Piece> cells;
  for (std::size_t i = 0; i < lo_opts.size(); ++i) {
    for (std::size_t j = 0; j < hi_opts.size(); ++j) {
      std::vector<Constraint> rows = rest;
      if (lo_opts[i]) {
        for (std::size_t k = 0; k < lowers.size(); ++k)
          if (k != i) rows.push_back({*lo_opts[i] - lowers[k], k < i});
      }
      if (hi_opts[j]) {
        for (std::size_t k = 0; k < uppers.size(); ++k)
          if (k != j) rows.push_back({uppers[k] - *hi_opts[j], k < j});
      }
      if (lo_opts[i] && hi_opts[j]) rows.push_back({*hi_opts[j] - *lo_opts[i], false});
      auto region = Region::make(remaining, std::move(rows));
      if (!region) continue;

      std::vector<ExpPolyTerm> terms;
      for (const auto& t : piece.terms) {
        auto up = antiderivative_at(t, v, hi_opts[j], true);
        auto lo = antiderivative_at(t, v, lo_opts[i], false);
        terms.insert(terms.end(), up.begin(), up.end());
        for (auto& x : lo) {
          x.coeff = -x.coeff;
          terms.push_back(std::move(x));
        }
      }
      terms = canonical_terms(std::move(terms));
      if (!terms.empty()) cells.push_back({std::move(*region), std::move(terms)});
    }
  }
  return cells;
}

}  // namespace

int ExpPolyTerm::degree() const { return total_degree(powers); }

Real ExpPolyTerm::evaluate(const Point& p) const {
  Real v = coeff;
  for (const auto& [x, k] : powers) {
    auto it = p.find(x);
    if (it == p.end()) raise(ErrorKind::InvalidPoint, "no value for variable " + x);
    for (int i = 0; i < k; ++i) v *= it->second;
  }
  return v * real_exp(exp_arg.evaluate(p));
}

PiecewiseFn::PiecewiseFn(std::vector<VarId> vars, std::vector<Piece> pieces)
    : vars_(std::move(vars)) {
  std::sort(vars_.begin(), vars_.end());
  vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
  if (vars_.size() > limits().max_vars)
    raise(ErrorKind::CapacityExceeded, "function over " + std::to_string(vars_.size()) +
                                           " variables exceeds " +
                                           std::to_string(limits().max_vars));
  check_piece_count(pieces.size());
  for (auto& p : pieces) {
    p.terms = canonical_terms(std::move(p.terms));
    for (const auto& t : p.terms) check_degree(t);
    if (!p.terms.empty()) pieces_.push_back(std::move(p));
  }
}

PiecewiseFn PiecewiseFn::identity() { return constant(1.0); }

PiecewiseFn PiecewiseFn::constant(Real c) {
  return PiecewiseFn({}, {Piece{Region{}, {ExpPolyTerm{c, {}, LinExpr{}}}}});
}

PiecewiseFn PiecewiseFn::on_region(const Region& region, std::vector<ExpPolyTerm> terms) {
  std::vector<VarId> vars = region.vars();
  for (const auto& t : terms) {
    for (const auto& [v, k] : t.powers) vars.push_back(v);
    for (const auto& v : t.exp_arg.vars()) vars.push_back(v);
  }
  return PiecewiseFn(std::move(vars), {Piece{region, std::move(terms)}});
}

bool PiecewiseFn::has_var(const VarId& v) const {
  return std::binary_search(vars_.begin(), vars_.end(), v);
}

double PiecewiseFn::scalar_value() const {
  if (!vars_.empty()) raise(ErrorKind::DomainMismatch, "function is not a scalar");
  Real s = 0.0;
  for (const auto& p : pieces_)
    for (const auto& t : p.terms) s += t.evaluate({});
  return static_cast<double>(s);
}

bool PiecewiseFn::is_mte() const {
  for (const auto& p : pieces_)
    for (const auto& t : p.terms)
      if (!t.powers.empty()) return false;
  return true;
}

int PiecewiseFn::max_degree() const {
  int d = 0;
  for (const auto& p : pieces_)
    for (const auto& t : p.terms) d = std::max(d, t.degree());
  return d;
}

std::size_t PiecewiseFn::term_count() const {
  std::size_t n = 0;
  for (const auto& p : pieces_) n += p.terms.size();
  return n;
}

std::string PiecewiseFn::to_string() const {
  std::ostringstream os;
  os << "PiecewiseFn(";
  for (std::size_t i = 0; i < vars_.size(); ++i) os << (i ? "," : "") << vars_[i];
  os << ")\n";
  for (const auto& p : pieces_) {
    os << "  on {";
    for (std::size_t i = 0; i < p.region.constraints().size(); ++i) {
      const auto& c = p.region.constraints()[i];
      os << (i ? "; " : "") << c.expr.to_string() << (c.strict ? " > 0" : " >= 0");
    }
    os << "}:";
    for (const auto& t : p.terms) {
      os << " + " << static_cast<double>(t.coeff);
      for (const auto& [v, k] : t.powers) os << "*" << v << "^" << k;
      if (!t.exp_arg.is_constant() || t.exp_arg.constant() != 0.0)
        os << "*exp(" << t.exp_arg.to_string() << ")";
    }
    os << "\n";
  }
  return os.str();
}

double evaluate(const PiecewiseFn& f, const Point& p) {
  for (const auto& v : f.vars())
    if (!p.count(v)) raise(ErrorKind::InvalidPoint, "no value for variable " + v);
  for (const auto& piece : f.pieces()) {
    if (!piece.region.contains(p)) continue;
    Real s = 0.0;
    for (const auto& t : piece.terms) s += t.evaluate(p);
    return static_cast<double>(s);
  }
  return 0.0;
}

PiecewiseFn scale(const PiecewiseFn& f, double s) {
  std::vector<Piece> pieces = f.pieces();
  for (auto& p : pieces)
    for (auto& t : p.terms) t.coeff *= s;
  return PiecewiseFn(f.vars(), std::move(pieces));
}

PiecewiseFn multiply(const PiecewiseFn& f, const PiecewiseFn& g) {
  const auto vars = union_vars(f.vars(), g.vars());
  std::vector<Piece> pieces;
  for (const auto& p : f.pieces()) {
    for (const auto& q : g.pieces()) {
      auto region = intersect(p.region, q.region);
      if (!region) continue;
      std::vector<ExpPolyTerm> terms;
      terms.reserve(p.terms.size() * q.terms.size());
      for (const auto& a : p.terms) {
        for (const auto& b : q.terms) {
          ExpPolyTerm t{a.coeff * b.coeff, add_powers(a.powers, b.powers), a.exp_arg + b.exp_arg};
          check_degree(t);
          terms.push_back(std::move(t));
        }
      }
      pieces.push_back({std::move(*region), std::move(terms)});
      check_piece_count(pieces.size());
    }
  }
  return PiecewiseFn(vars, std::move(pieces));
}

PiecewiseFn add(const PiecewiseFn& f, const PiecewiseFn& g) {
  const auto vars = union_vars(f.vars(), g.vars());
  std::vector<Piece> acc = f.pieces();
  for (const auto& p : g.pieces()) overlay_insert(acc, p);
  return PiecewiseFn(vars, std::move(acc));
}

PiecewiseFn weighted_sum(const std::vector<std::pair<double, PiecewiseFn>>& terms) {
  if (terms.empty()) return PiecewiseFn{};
  const auto& vars = terms.front().second.vars();
  for (const auto& [w, f] : terms)
    if (f.vars() != vars) raise(ErrorKind::DomainMismatch, "weighted_sum over different variable sets");
  PiecewiseFn acc = scale(terms.front().second, terms.front().first);
  for (std::size_t i = 1; i < terms.size(); ++i)
    acc = add(acc, scale(terms[i].second, terms[i].first));
  return PiecewiseFn(vars, acc.pieces());
}

PiecewiseFn substitute_linear(const PiecewiseFn& f, const VarId& v, const LinExpr& e) {
  if (e.has(v)) raise(ErrorKind::InvalidArgument, "substitution for " + v + " mentions " + v);
  std::vector<VarId> vars;
  for (const auto& x : f.vars())
    if (x != v) vars.push_back(x);
  vars = union_vars(std::move(vars), e.vars());

  std::vector<Piece> pieces;
  bool collapsed = false;
  for (const auto& p : f.pieces()) {
    auto region = substitute(p.region, v, e, &collapsed);
    if (!region) continue;
    std::vector<ExpPolyTerm> terms;
    for (const auto& t : p.terms) {
      auto st = substitute_term(t, v, e);
      terms.insert(terms.end(), st.begin(), st.end());
    }
    pieces.push_back({std::move(*region), std::move(terms)});
  }

  if (collapsed) {
    // A boundary was mapped onto the whole space, so two formerly adjacent
    // pieces may now overlap.  Earlier pieces take precedence.
    std::vector<Piece> repaired;
    for (auto& p : pieces) {
      std::vector<Region> parts{p.region};
      for (const auto& q : repaired) {
        std::vector<Region> next;
        for (const auto& r : parts)
          for (auto& s : subtract(r, q.region)) next.push_back(std::move(s));
        parts = std::move(next);
      }
      for (auto& r : parts) repaired.push_back({std::move(r), p.terms});
    }
    pieces = std::move(repaired);
  }
  return PiecewiseFn(vars, std::move(pieces));
}

PiecewiseFn eliminate_integrate(const PiecewiseFn& f, const VarId& v) {
  if (!f.has_var(v)) raise(ErrorKind::DomainMismatch, "variable " + v + " not in function");
  std::vector<VarId> remaining;
  for (const auto& x : f.vars())
    if (x != v) remaining.push_back(x);

  if (remaining.empty()) {
    Real total = 0.0;
    for (const auto& p : f.pieces())
      for (const auto& cell : integrate_piece(p, v, remaining))
        for (const auto& t : cell.terms) total += t.evaluate({});
    return PiecewiseFn::constant(total);
  }

  std::vector<Piece> acc;
  bool first = true;
  for (const auto& p : f.pieces()) {
    auto cells = integrate_piece(p, v, remaining);
    if (first) {
      acc = std::move(cells);
      first = acc.empty();
      check_piece_count(acc.size());
      continue;
    }
    for (auto& c : cells) overlay_insert(acc, std::move(c));
  }
  return PiecewiseFn(remaining, std::move(acc));
}

double definite_integral(const PiecewiseFn& f) {
  PiecewiseFn g = f;
  while (!g.vars().empty()) g = eliminate_integrate(g, g.vars().front());
  return g.scalar_value();
}

double moment(const PiecewiseFn& f, const VarId& v, int order) {
  if (order < 1 || order > 2) raise(ErrorKind::InvalidArgument, "moment order must be 1 or 2");
  if (f.vars() != std::vector<VarId>{v})
    raise(ErrorKind::DomainMismatch, "moment requires a univariate function of " + v);
  const double mass = definite_integral(f);
  if (!(std::abs(mass) > 0.0)) raise(ErrorKind::DegenerateDensity, "zero total mass");
  std::vector<Piece> pieces = f.pieces();
  for (auto& p : pieces)
    for (auto& t : p.terms) t.powers[v] += order;
  return definite_integral(PiecewiseFn(f.vars(), std::move(pieces))) / mass;
}

std::pair<double, double> support_interval(const PiecewiseFn& f) {
  if (f.vars().size() != 1) raise(ErrorKind::DomainMismatch, "support_interval needs one variable");
  const VarId& v = f.vars().front();
  const double inf = std::numeric_limits<double>::infinity();
  double lo = inf, hi = -inf;
  for (const auto& p : f.pieces()) {
    double plo = -inf, phi = inf;
    for (const auto& c : p.region.constraints()) {
      const double a = c.expr.coeff(v);
      const double bound = -c.expr.constant() / a;
      if (a > 0)
        plo = std::max(plo, bound);
      else
        phi = std::min(phi, bound);
    }
    lo = std::min(lo, plo);
    hi = std::max(hi, phi);
  }
  return {lo, hi};
}

}  // namespace hmte
