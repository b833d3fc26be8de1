// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/region.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmte/limits.hpp"
#include "lp.hpp"

namespace hmte {

namespace {

constexpr double kBox = 1e6;
constexpr double kRowTol = 1e-12;

std::vector<VarId> merge_vars(std::vector<VarId> a, const std::vector<VarId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

// Lexicographic order on (coefficients, constant) used to canonicalise rows.
bool row_less(const Constraint& a, const Constraint& b) {
  if (a.expr.coeffs() != b.expr.coeffs()) return a.expr.coeffs() < b.expr.coeffs();
  return a.expr.constant() < b.expr.constant();
}

bool same_normal(const LinExpr& a, const LinExpr& b) {
  if (a.coeffs().size() != b.coeffs().size()) return false;
  for (const auto& [v, c] : a.coeffs())
    if (std::abs(c - b.coeff(v)) > kRowTol) return false;
  return true;
}

std::vector<double> row_coeffs(const LinExpr& e, const std::vector<VarId>& vars) {
  std::vector<double> out(vars.size(), 0.0);
  for (std::size_t j = 0; j < vars.size(); ++j) out[j] = e.coeff(vars[j]);
  return out;
}

}  // namespace

bool Constraint::satisfied_by(const Point& p) const {
  const double g = expr.evaluate(p);
  return strict ? g > 0.0 : g >= -kRowTol * (1.0 + std::abs(expr.constant()));
}

std::optional<Region> Region::make(std::vector<VarId> vars, std::vector<Constraint> constraints,
                                   bool* collapsed) {
  for (const auto& c : constraints) vars = merge_vars(std::move(vars), c.expr.vars());
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

  std::vector<Constraint> rows;
  rows.reserve(constraints.size());
  for (auto& c : constraints) {
    if (c.expr.is_constant()) {
      const double k = c.expr.constant();
      if (c.strict ? !(k > kFeasibilityTol) : k < -kFeasibilityTol) return std::nullopt;
      if (!c.strict && std::abs(k) <= kFeasibilityTol && collapsed) *collapsed = true;
      continue;
    }
    const double nrm = c.expr.norm();
    rows.push_back({c.expr * (1.0 / nrm), c.strict});
  }
  std::sort(rows.begin(), rows.end(), row_less);

  // Parallel rows with the same normal: keep the tightest.
  std::vector<Constraint> dedup;
  for (auto& r : rows) {
    if (!dedup.empty() && same_normal(dedup.back().expr, r.expr)) {
      Constraint& kept = dedup.back();
      const double dk = kept.expr.constant(), dr = r.expr.constant();
      if (dr < dk - kRowTol) {
        kept = r;
      } else if (std::abs(dr - dk) <= kRowTol) {
        kept.strict = kept.strict || r.strict;
      }
      continue;
    }
    dedup.push_back(std::move(r));
  }

  Region out;
  out.vars_ = std::move(vars);
  const std::size_t n = out.vars_.size();
  if (dedup.empty()) {
    for (const auto& v : out.vars_) out.center_[v] = 0.0;
    out.radius_ = std::numeric_limits<double>::infinity();
    return out;
  }

  // Chebyshev centre: maximise t subject to g_i(x) - t >= 0, t <= 1.
  {
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    double t0 = 1.0;
    for (const auto& r : dedup) {
      auto row = row_coeffs(r.expr, out.vars_);
      row.push_back(-1.0);
      A.push_back(std::move(row));
      b.push_back(r.expr.constant());
      t0 = std::min(t0, static_cast<double>(r.expr.constant()));
    }
    std::vector<double> cap(n + 1, 0.0);
    cap[n] = -1.0;
    A.push_back(cap);
    b.push_back(1.0);
    std::vector<double> obj(n + 1, 0.0);
    obj[n] = 1.0;
    std::vector<double> x0(n + 1, 0.0);
    x0[n] = t0;
    const auto sol = detail::maximize_from(A, b, obj, x0, kBox + std::abs(t0));
    out.radius_ = sol.x[n];
    if (!(out.radius_ > kFeasibilityTol)) return std::nullopt;
    for (std::size_t j = 0; j < n; ++j) out.center_[out.vars_[j]] = sol.x[j];
  }

  // Redundancy removal: row k is redundant when min g_k over the others >= 0.
  std::vector<double> x0(n);
  for (std::size_t j = 0; j < n; ++j) x0[j] = out.center_[out.vars_[j]];
  std::vector<bool> keep(dedup.size(), true);
  for (std::size_t k = 0; k < dedup.size(); ++k) {
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    for (std::size_t i = 0; i < dedup.size(); ++i) {
      if (i == k || !keep[i]) continue;
      A.push_back(row_coeffs(dedup[i].expr, out.vars_));
      b.push_back(dedup[i].expr.constant());
    }
    auto obj = row_coeffs(dedup[k].expr, out.vars_);
    for (double& v : obj) v = -v;
    const auto sol = detail::maximize_from(A, b, obj, x0, kBox);
    const double min_gk = -sol.value + dedup[k].expr.constant();
    if (min_gk >= -kFeasibilityTol) keep[k] = false;
  }
  for (std::size_t k = 0; k < dedup.size(); ++k)
    if (keep[k]) out.constraints_.push_back(std::move(dedup[k]));
  return out;
}

Region Region::box(const std::vector<VarId>& vars, const std::vector<double>& lo,
                   const std::vector<double>& hi) {
  std::vector<Constraint> rows;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    rows.push_back({LinExpr::variable(vars[j]) - LinExpr(lo[j]), false});
    rows.push_back({LinExpr(hi[j]) - LinExpr::variable(vars[j]), false});
  }
  auto r = make(vars, std::move(rows));
  if (!r) return Region{};
  return *r;
}

bool Region::contains(const Point& p) const {
  return std::all_of(constraints_.begin(), constraints_.end(),
                     [&](const Constraint& c) { return c.satisfied_by(p); });
}

bool Region::is_axis_aligned() const {
  return std::all_of(constraints_.begin(), constraints_.end(),
                     [](const Constraint& c) { return c.expr.coeffs().size() <= 1; });
}

bool Region::same_as(const Region& o) const {
  if (vars_ != o.vars_ || constraints_.size() != o.constraints_.size()) return false;
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    if (constraints_[i].strict != o.constraints_[i].strict) return false;
    if (!constraints_[i].expr.approx_equal(o.constraints_[i].expr, kRowTol)) return false;
  }
  return true;
}

std::optional<Region> intersect(const Region& a, const Region& b) {
  std::vector<Constraint> rows = a.constraints();
  rows.insert(rows.end(), b.constraints().begin(), b.constraints().end());
  return Region::make(merge_vars(a.vars(), b.vars()), std::move(rows));
}

std::vector<Region> subtract(const Region& a, const Region& b) {
  if (!intersect(a, b)) return {a};
  std::vector<Region> parts;
  std::vector<Constraint> prefix = a.constraints();
  const auto vars = merge_vars(a.vars(), b.vars());
  for (const auto& c : b.constraints()) {
    auto rows = prefix;
    rows.push_back(c.negated());
    if (auto r = Region::make(vars, std::move(rows))) parts.push_back(std::move(*r));
    prefix.push_back(c);
  }
  return parts;
}

std::optional<Region> substitute(const Region& r, const VarId& v, const LinExpr& e,
                                 bool* collapsed) {
  std::vector<VarId> vars;
  for (const auto& x : r.vars())
    if (x != v) vars.push_back(x);
  vars = merge_vars(std::move(vars), e.vars());
  std::vector<Constraint> rows;
  rows.reserve(r.constraints().size());
  for (const auto& c : r.constraints()) rows.push_back({c.expr.substitute(v, e), c.strict});
  return Region::make(std::move(vars), std::move(rows), collapsed);
}

}  // namespace hmte
