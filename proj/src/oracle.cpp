// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <boost/math/tools/roots.hpp>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {
namespace {

// The standard two-piece normal approximation, written out independently of
// the model compiler.
constexpr double kA0 = -0.0105929;
constexpr double kA[3] = {197.5892111, -462.6885096, 265.5099139};
constexpr double kB[3] = {2.2568434, 2.3434117, 2.4043270};

double standard_template(double u) {
  if (!(u >= -3.0 && u <= 3.0)) return 0.0;
  const double s = u < 0.0 ? 1.0 : -1.0;
  double v = kA0;
  for (int i = 0; i < 3; ++i) v += kA[i] * std::exp(s * kB[i] * u);
  return v;
}

// ---------------------------------------------------------------------------
// Model lookups

std::vector<VarId> topological_order(const Network& n) {
  std::vector<VarId> out;
  std::set<VarId> done;
  while (out.size() < n.variables.size()) {
    const std::size_t before = out.size();
    for (const auto& v : n.variables) {
      if (done.count(v.name)) continue;
      if (std::all_of(v.parents.begin(), v.parents.end(), [&](const VarId& p) { return done.count(p) > 0; })) {
        out.push_back(v.name);
        done.insert(v.name);
      }
    }
    if (out.size() == before) raise(ErrorKind::InvalidArgument, "the network has a cycle");
  }
  return out;
}

Configuration parent_configuration(const Network& n, const VarId& v, const std::map<VarId, int>& states) {
  Configuration c;
  for (const auto& p : n.discrete_parents(v)) c.push_back(states.at(p));
  return c;
}

template <class Map>
const typename Map::mapped_type& lookup(const Map& m, const Configuration& c, const VarId& v) {
  auto it = m.find(c);
  if (it == m.end()) it = m.find(Configuration{});
  if (it == m.end()) raise(ErrorKind::InvalidArgument, "no conditional for " + v + " in this configuration");
  return it->second;
}

std::vector<std::map<VarId, int>> discrete_configurations(const Network& n) {
  std::vector<std::map<VarId, int>> out{{}};
  for (const auto& v : n.variables) {
    if (v.kind != VarKind::Discrete) continue;
    std::vector<std::map<VarId, int>> next;
    for (const auto& c : out)
      for (std::size_t s = 0; s < v.states.size(); ++s) {
        auto d = c;
        d[v.name] = static_cast<int>(s);
        next.push_back(std::move(d));
      }
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature

struct Affine {
  std::vector<double> a;
  double b = 0.0;

  double at(const std::vector<double>& x) const {
    double v = b;
    for (std::size_t j = 0; j < a.size(); ++j) v += a[j] * x[j];
    return v;
  }
};

Affine dense(const LinExpr& e, const std::vector<VarId>& free) {
  Affine out{std::vector<double>(free.size(), 0.0), static_cast<double>(e.constant())};
  for (const auto& [v, c] : e.coeffs()) {
    const auto it = std::find(free.begin(), free.end(), v);
    if (it == free.end()) raise(ErrorKind::InvalidArgument, "internal: " + v + " is not free");
    out.a[it - free.begin()] = static_cast<double>(c);
  }
  return out;
}

struct Factor {
  // Normal template: value T(u) / sd with u affine.
  bool normal = true;
  Affine u;
  double inv_sd = 1.0;
  // Explicit density evaluated at the listed arguments.
  const PiecewiseFn* f = nullptr;
  std::vector<std::pair<VarId, Affine>> args;

  double value(const std::vector<double>& x) const {
    if (normal) return standard_template(u.at(x)) * inv_sd;
    Point p;
    for (const auto& [v, e] : args) p[v] = e.at(x);
    return evaluate(*f, p);
  }
};

struct Integrand {
  std::size_t dim = 0;
  double scale = 1.0;
  std::vector<Factor> factors;
  Affine target;
  std::vector<Affine> planes;  // non-smooth where a plane is zero
  std::vector<std::pair<double, double>> box;

  double value(const std::vector<double>& x) const {
    double v = scale;
    for (const auto& f : factors) {
      v *= f.value(x);
      if (v == 0.0) return 0.0;
    }
    return v;
  }
};

struct Sums {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  Sums& add(const Sums& o, double w) {
    s0 += w * o.s0;
    s1 += w * o.s1;
    s2 += w * o.s2;
    return *this;
  }
};

// Solves the r x r system M y = rhs in place; false when singular.
bool solve_dense(std::vector<std::vector<double>>& M, std::vector<double>& rhs) {
  const std::size_t r = rhs.size();
  for (std::size_t c = 0; c < r; ++c) {
    std::size_t p = c;
    for (std::size_t i = c + 1; i < r; ++i)
      if (std::abs(M[i][c]) > std::abs(M[p][c])) p = i;
    if (std::abs(M[p][c]) < 1e-12) return false;
    std::swap(M[p], M[c]);
    std::swap(rhs[p], rhs[c]);
    for (std::size_t i = 0; i < r; ++i) {
      if (i == c) continue;
      const double f = M[i][c] / M[c][c];
      if (f == 0.0) continue;
      for (std::size_t j = c; j < r; ++j) M[i][j] -= f * M[c][j];
      rhs[i] -= f * rhs[c];
    }
  }
  for (std::size_t i = 0; i < r; ++i) rhs[i] /= M[i][i];
  return true;
}

// Values of x_k at which the integral over x_{k+1..} stops being smooth: the
// projections of the vertices of the plane arrangement in the remaining
// coordinates.
std::vector<double> breakpoints(const Integrand& g, const std::vector<double>& x, std::size_t k) {
  const std::size_t r = g.dim - k;
  std::vector<std::vector<double>> rows;
  std::vector<double> consts;
  auto push = [&](const Affine& p) {
    std::vector<double> a(p.a.begin() + k, p.a.end());
    if (std::all_of(a.begin(), a.end(), [](double c) { return std::abs(c) < 1e-15; })) return;
    double b = p.b;
    for (std::size_t j = 0; j < k; ++j) b += p.a[j] * x[j];
    rows.push_back(std::move(a));
    consts.push_back(b);
  };
  for (const auto& p : g.planes) push(p);
  for (std::size_t j = k + 1; j < g.dim; ++j)
    for (double edge : {g.box[j].first, g.box[j].second}) {
      Affine p{std::vector<double>(g.dim, 0.0), -edge};
      p.a[j] = 1.0;
      push(p);
    }

  std::vector<double> out;
  const std::size_t m = rows.size();
  if (m < r) return out;
  std::vector<std::size_t> pick(r);
  for (std::size_t i = 0; i < r; ++i) pick[i] = i;
  while (true) {
    std::vector<std::vector<double>> M;
    std::vector<double> rhs;
    for (std::size_t i : pick) {
      M.push_back(rows[i]);
      rhs.push_back(-consts[i]);
    }
    if (solve_dense(M, rhs)) out.push_back(rhs[0]);
    // Next combination.
    std::size_t i = r;
    while (i > 0 && pick[i - 1] == m - r + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < r; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

Sums integrate(const Integrand& g, std::vector<double>& x, std::size_t k, int points) {
  if (k == g.dim) {
    const double w = g.value(x);
    const double t = g.target.at(x);
    return {w, w * t, w * t * t};
  }
  const auto [lo, hi] = g.box[k];
  if (!(hi > lo)) return {};
  std::vector<double> cuts{lo, hi};
  for (double c : breakpoints(g, x, k))
    if (c > lo && c < hi) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());

  Sums total;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1];
    if (b - a < 1e-13 * std::max(1.0, hi - lo)) continue;
    int n = std::max(3, static_cast<int>(std::ceil((points - 1) * (b - a) / (hi - lo))) + 1);
    if (n % 2 == 0) ++n;
    const double h = (b - a) / (n - 1);
    // The midpoint is a node; a cell that is empty there is empty throughout.
    const int mid = (n - 1) / 2;
    x[k] = a + mid * h;
    const Sums centre = integrate(g, x, k + 1, points);
    if (centre.s0 == 0.0) continue;
    Sums seg;
    for (int i = 0; i < n; ++i) {
      const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      if (i == mid) {
        seg.add(centre, w);
        continue;
      }
      // Endpoints sit on discontinuities; take the limit from inside the cell.
      x[k] = i == 0 ? a + 1e-11 * (b - a) : i == n - 1 ? b - 1e-11 * (b - a) : a + i * h;
      seg.add(integrate(g, x, k + 1, points), w);
    }
    total.add(seg, h / 3.0);
  }
  return total;
}

struct Interval {
  double lo = 0.0, hi = 0.0;
};

Interval interval_of(const LinExpr& e, const std::map<VarId, Interval>& iv) {
  Interval out{static_cast<double>(e.constant()), static_cast<double>(e.constant())};
  for (const auto& [v, c] : e.coeffs()) {
    const Interval& i = iv.at(v);
    const double a = static_cast<double>(c) * i.lo, b = static_cast<double>(c) * i.hi;
    out.lo += std::min(a, b);
    out.hi += std::max(a, b);
  }
  return out;
}

// One discrete configuration after every substitution.
struct Cell {
  int order = 0;  // number of observations landing on point states
  Sums sums;
  int target_state = -1;
};

std::optional<Cell> build_cell(const Network& n, const std::vector<VarId>& order, const Evidence& ev,
                               const std::map<VarId, int>& states, const VarId& target,
                               const QuadratureSpec& spec) {
  double scale = 1.0;
  int hits = 0;
  std::map<VarId, LinExpr> expr;       // continuous value in terms of free variables
  std::map<VarId, Interval> range;     // support bound per continuous variable
  std::vector<VarId> free;             // in order of appearance
  std::vector<VarId> dens_vars;

  for (const auto& v : order) {
    const Variable& var = n.variable(v);
    const Cpd& cpd = n.cpds.at(v);
    const Configuration pc = parent_configuration(n, v, states);
    if (var.kind == VarKind::Discrete) {
      scale *= cpd.table.at(pc).at(states.at(v));
      continue;
    }
    auto obs = ev.find(v);
    const double* value = obs == ev.end() ? nullptr : std::get_if<double>(&obs->second);
    if (var.kind == VarKind::Continuous) {
      dens_vars.push_back(v);
      if (value) {
        expr[v] = LinExpr(*value);
        range[v] = {*value, *value};
        continue;
      }
      expr[v] = LinExpr::variable(v);
      free.push_back(v);
      if (auto b = spec.bounds.find(v); b != spec.bounds.end()) {
        range[v] = {b->second.first, b->second.second};
        continue;
      }
      const auto& d = lookup(cpd.density, pc, v);
      if (const auto* ns = std::get_if<NormalSpec>(&d)) {
        const Interval m = interval_of(ns->mean, range);
        const double sd = std::sqrt(ns->variance);
        range[v] = {m.lo - 3.0 * sd, m.hi + 3.0 * sd};
      } else {
        const auto& f = std::get<PiecewiseFn>(d);
        if (f.vars().size() != 1)
          raise(ErrorKind::InvalidArgument, "quadrature bounds for " + v + " must be given explicitly");
        const auto [lo, hi] = support_interval(f);
        range[v] = {lo, hi};
      }
      continue;
    }
    // Deterministic: substitute the parents' expressions.
    const LinExpr rhs = lookup(cpd.equations, pc, v).solve_for(v);
    LinExpr e(rhs.constant());
    for (const auto& [p, c] : rhs.coeffs()) e += expr.at(p) * c;
    expr[v] = e;
    range[v] = interval_of(rhs, range);
    if (!value) continue;
    const LinExpr g = e - LinExpr(*value);
    if (g.is_constant()) {
      if (std::abs(static_cast<double>(g.constant())) > 1e-9 * std::max(1.0, std::abs(*value))) return std::nullopt;
      ++hits;
      continue;
    }
    // Solve for the latest free variable it mentions.
    VarId u;
    for (const auto& f : free)
      if (g.has(f)) u = f;
    const Real a = g.coeff(u);
    if (std::abs(a) < kZeroEps) raise(ErrorKind::NonInvertibleEquation, "evidence on " + v + " cannot be solved");
    scale /= std::abs(static_cast<double>(a));
    const LinExpr sol = g.solve_for(u);
    for (auto& [w, ew] : expr) ew = ew.substitute(u, sol);
    free.erase(std::find(free.begin(), free.end(), u));
    expr[v] = LinExpr(*value);
  }

  if (free.size() > 3)
    raise(ErrorKind::OracleDimension, std::to_string(free.size()) + " free continuous dimensions");

  Integrand g;
  g.dim = free.size();
  g.scale = scale;
  for (const auto& f : free) g.box.emplace_back(range.at(f).lo, range.at(f).hi);
  for (const auto& z : dens_vars) {
    const Cpd& cpd = n.cpds.at(z);
    const auto& d = lookup(cpd.density, parent_configuration(n, z, states), z);
    Factor fac;
    if (const auto* ns = std::get_if<NormalSpec>(&d)) {
      LinExpr mean(ns->mean.constant());
      for (const auto& [p, c] : ns->mean.coeffs()) mean += expr.at(p) * c;
      const double sd = std::sqrt(ns->variance);
      fac.u = dense((expr.at(z) - mean) * (1.0 / sd), free);
      fac.inv_sd = 1.0 / sd;
      for (double edge : {-3.0, 0.0, 3.0}) {
        Affine p = fac.u;
        p.b -= edge;
        g.planes.push_back(p);
      }
    } else {
      fac.normal = false;
      fac.f = &std::get<PiecewiseFn>(d);
      for (const auto& w : fac.f->vars()) fac.args.emplace_back(w, dense(expr.at(w), free));
      for (const auto& piece : fac.f->pieces())
        for (const auto& c : piece.region.constraints()) {
          LinExpr e(c.expr.constant());
          for (const auto& [w, k] : c.expr.coeffs()) e += expr.at(w) * k;
          g.planes.push_back(dense(e, free));
        }
    }
    g.factors.push_back(std::move(fac));
  }

  Cell cell;
  cell.order = hits;
  if (n.is_discrete(target)) {
    cell.target_state = states.at(target);
    g.target = Affine{std::vector<double>(g.dim, 0.0), static_cast<double>(cell.target_state)};
  } else {
    g.target = dense(expr.at(target), free);
  }
  std::vector<double> x(g.dim, 0.0);
  cell.sums = integrate(g, x, 0, spec.points_per_axis);
  return cell;
}

// ---------------------------------------------------------------------------
// Sampling

// c * z^k * exp(b z + d)
struct UniTerm {
  double c = 0.0;
  int k = 0;
  double b = 0.0, d = 0.0;

  double antiderivative(double z) const {
    if (std::abs(b) < 1e-300) return c * std::exp(d) * std::pow(z, k + 1) / (k + 1);
    // e^{bz+d} sum_j (-1)^j k!/(k-j)! z^{k-j} / b^{j+1}
    double s = 0.0, fall = 1.0;
    for (int j = 0; j <= k; ++j) {
      s += (j % 2 ? -1.0 : 1.0) * fall * std::pow(z, k - j) / std::pow(b, j + 1);
      fall *= k - j;
    }
    return c * std::exp(b * z + d) * s;
  }
};

struct UniPiece {
  double lo = 0.0, hi = 0.0;
  std::vector<UniTerm> terms;

  double cdf(double z) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.antiderivative(z) - t.antiderivative(lo);
    return s;
  }
};

std::vector<UniPiece> standard_pieces() {
  UniPiece left{-3.0, 0.0, {{kA0, 0, 0.0, 0.0}}}, right{0.0, 3.0, {{kA0, 0, 0.0, 0.0}}};
  for (int i = 0; i < 3; ++i) {
    left.terms.push_back({kA[i], 0, kB[i], 0.0});
    right.terms.push_back({kA[i], 0, -kB[i], 0.0});
  }
  return {left, right};
}

std::vector<UniPiece> univariate_pieces(const PiecewiseFn& f, const VarId& z) {
  std::vector<UniPiece> out;
  for (const auto& piece : f.pieces()) {
    UniPiece u{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), {}};
    for (const auto& c : piece.region.constraints()) {
      const double a = static_cast<double>(c.expr.coeff(z)), k = static_cast<double>(c.expr.constant());
      if (a > 0) u.lo = std::max(u.lo, -k / a);
      if (a < 0) u.hi = std::min(u.hi, -k / a);
    }
    if (!std::isfinite(u.lo) || !std::isfinite(u.hi))
      raise(ErrorKind::DivergentIntegral, "cannot sample " + z + " from an unbounded piece");
    for (const auto& t : piece.terms) {
      const auto p = t.powers.find(z);
      u.terms.push_back({static_cast<double>(t.coeff), p == t.powers.end() ? 0 : p->second,
                         static_cast<double>(t.exp_arg.coeff(z)), static_cast<double>(t.exp_arg.constant())});
    }
    out.push_back(std::move(u));
  }
  return out;
}

double inverse_cdf(const std::vector<UniPiece>& pieces, double u01) {
  std::vector<double> mass;
  double total = 0.0;
  for (const auto& p : pieces) {
    mass.push_back(p.cdf(p.hi));
    total += mass.back();
  }
  if (!(total > 0.0)) raise(ErrorKind::DegenerateDensity, "density with no mass");
  double t = u01 * total;
  std::size_t i = 0;
  while (i + 1 < pieces.size() && t > mass[i]) t -= mass[i++];
  const UniPiece& p = pieces[i];
  auto f = [&](double z) { return p.cdf(z) - t; };
  double lo = p.lo, hi = p.hi;
  if (f(lo) >= 0.0) return lo;
  if (f(hi) <= 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(
      f, lo, hi, [](double a, double b) { return std::abs(b - a) <= 1e-12; }, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace

OraclePosterior quadrature_posterior(const Network& n, const Evidence& evidence, const VarId& v,
                                     const QuadratureSpec& spec) {
  if (spec.points_per_axis < 3 || spec.points_per_axis % 2 == 0)
    raise(ErrorKind::InvalidArgument, "points per axis must be odd and at least 3");
  n.variable(v);
  check_evidence(n, evidence);
  const auto order = topological_order(n);

  std::vector<Cell> cells;
  for (const auto& states : discrete_configurations(n)) {
    bool consistent = true;
    for (const auto& [name, obs] : evidence) {
      if (!n.is_discrete(name)) continue;
      const auto& st = n.variable(name).states;
      if (st[states.at(name)] != std::get<std::string>(obs)) consistent = false;
    }
    if (!consistent) continue;
    if (auto c = build_cell(n, order, evidence, states, v, spec)) cells.push_back(*c);
  }

  int top = -1;
  for (const auto& c : cells)
    if (c.sums.s0 > 0.0) top = std::max(top, c.order);
  if (top < 0) raise(ErrorKind::InconsistentEvidence, "the evidence has zero likelihood");

  OraclePosterior out;
  Sums s;
  if (n.is_discrete(v)) out.probabilities.assign(n.variable(v).states.size(), 0.0);
  for (const auto& c : cells) {
    if (c.order != top) continue;
    s.add(c.sums, 1.0);
    if (c.target_state >= 0) out.probabilities[c.target_state] += c.sums.s0;
  }
  out.evidence_weight = s.s0;
  out.mean = s.s1 / s.s0;
  out.variance = std::max(0.0, s.s2 / s.s0 - out.mean * out.mean);
  for (auto& p : out.probabilities) p /= s.s0;
  return out;
}

std::vector<std::vector<double>> forward_sample(const Network& n, std::size_t count, std::uint64_t seed) {
  const auto order = topological_order(n);
  std::map<VarId, std::size_t> column;
  for (std::size_t i = 0; i < n.variables.size(); ++i) column[n.variables[i].name] = i;
  const auto standard = standard_pieces();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> out(count, std::vector<double>(n.variables.size(), 0.0));
  for (auto& row : out) {
    std::map<VarId, int> states;
    Point values;
    for (const auto& v : order) {
      const Variable& var = n.variable(v);
      const Cpd& cpd = n.cpds.at(v);
      const Configuration pc = parent_configuration(n, v, states);
      double x = 0.0;
      if (var.kind == VarKind::Discrete) {
        const auto& p = cpd.table.at(pc);
        double t = unit(rng), acc = 0.0;
        std::size_t s = 0;
        for (; s + 1 < p.size(); ++s) {
          acc += p[s];
          if (t < acc) break;
        }
        while (p[s] == 0.0 && s > 0) --s;
        states[v] = static_cast<int>(s);
        x = static_cast<double>(s);
      } else if (var.kind == VarKind::Continuous) {
        const auto& d = lookup(cpd.density, pc, v);
        if (const auto* ns = std::get_if<NormalSpec>(&d)) {
          x = static_cast<double>(ns->mean.evaluate(values)) + std::sqrt(ns->variance) * inverse_cdf(standard, unit(rng));
        } else {
          PiecewiseFn f = std::get<PiecewiseFn>(d);
          for (const auto& w : f.vars())
            if (w != v) f = substitute_linear(f, w, LinExpr(values.at(w)));
          x = inverse_cdf(univariate_pieces(f, v), unit(rng));
        }
      } else {
        x = static_cast<double>(lookup(cpd.equations, pc, v).solve_for(v).evaluate(values));
      }
      values[v] = x;
      row[column.at(v)] = x;
    }
  }
  return out;
}

LinExpr solve_linear_system(const std::vector<LinExpr>& eqs, const std::vector<VarId>& eliminate) {
  if (eqs.size() != eliminate.size() + 1)
    raise(ErrorKind::InvalidArgument, "need exactly one more equation than eliminated variables");
  std::vector<LinExpr> rows = eqs;
  for (const auto& z : eliminate) {
    std::size_t p = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (std::abs(rows[i].coeff(z)) > std::abs(rows[p].coeff(z))) p = i;
    const Real pivot = rows[p].coeff(z);
    if (std::abs(pivot) < kZeroEps) raise(ErrorKind::NonInvertibleEquation, "no pivot for " + z);
    const LinExpr pr = rows[p];
    rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(p));
    for (auto& r : rows) {
      const Real f = r.coeff(z) / pivot;
      if (f != 0) r = (r - pr * f).without(z);
    }
  }
  const LinExpr& out = rows.front();
  if (out.is_constant()) raise(ErrorKind::NonInvertibleEquation, "the system leaves no variable");
  const VarId head = out.coeffs().rbegin()->first;
  return out * (1 / out.coeff(head));
}

}  // namespace hmte
