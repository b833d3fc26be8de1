// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/linexpr.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {

namespace {

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  // Prefer the shortest representation that still round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char tmp[64];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, x);
    if (std::strtod(tmp, nullptr) == x) return tmp;
  }
  return buf;
}

}  // namespace

LinExpr::LinExpr(std::map<VarId, Real> coeffs, Real constant)
    : coeffs_(std::move(coeffs)), constant_(constant) {
  prune();
}

LinExpr LinExpr::variable(const VarId& v, Real coeff) {
  return LinExpr({{v, coeff}}, 0.0);
}

void LinExpr::prune() {
  for (auto it = coeffs_.begin(); it != coeffs_.end();) {
    if (std::abs(it->second) < kZeroEps)
      it = coeffs_.erase(it);
    else
      ++it;
  }
}

Real LinExpr::coeff(const VarId& v) const {
  auto it = coeffs_.find(v);
  return it == coeffs_.end() ? 0.0 : it->second;
}

std::vector<VarId> LinExpr::vars() const {
  std::vector<VarId> out;
  out.reserve(coeffs_.size());
  for (const auto& [v, c] : coeffs_) out.push_back(v);
  return out;
}

Real LinExpr::evaluate(const Point& p) const {
  Real s = constant_;
  for (const auto& [v, c] : coeffs_) {
    auto it = p.find(v);
    if (it == p.end()) raise(ErrorKind::InvalidPoint, "no value for variable " + v);
    s += c * it->second;
  }
  return s;
}

LinExpr LinExpr::substitute(const VarId& v, const LinExpr& e) const {
  auto it = coeffs_.find(v);
  if (it == coeffs_.end()) return *this;
  const Real a = it->second;
  LinExpr out = without(v);
  out += e * a;
  return out;
}

LinExpr LinExpr::without(const VarId& v) const {
  LinExpr out = *this;
  out.coeffs_.erase(v);
  return out;
}

LinExpr LinExpr::solve_for(const VarId& v) const {
  const Real a = coeff(v);
  if (std::abs(a) < kZeroEps)
    raise(ErrorKind::NonInvertibleEquation, "zero coefficient on " + v + " in " + to_string());
  return without(v) * (-1.0 / a);
}

Real LinExpr::norm() const {
  Real s = 0.0;
  for (const auto& [v, c] : coeffs_) s += c * c;
  return real_sqrt(s);
}

LinExpr LinExpr::operator-() const { return *this * -1.0; }

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  for (const auto& [v, c] : o.coeffs_) coeffs_[v] += c;
  constant_ += o.constant_;
  prune();
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) { return *this += -o; }

LinExpr& LinExpr::operator*=(Real s) {
  for (auto& [v, c] : coeffs_) c *= s;
  constant_ *= s;
  prune();
  return *this;
}

bool LinExpr::approx_equal(const LinExpr& o, Real tol) const {
  if (std::abs(constant_ - o.constant_) > tol) return false;
  for (const auto& [v, c] : coeffs_)
    if (std::abs(c - o.coeff(v)) > tol) return false;
  for (const auto& [v, c] : o.coeffs_)
    if (std::abs(c - coeff(v)) > tol) return false;
  return true;
}

std::string LinExpr::to_string() const {
  std::string out;
  auto append = [&](Real c, const std::string& body) {
    if (out.empty()) {
      if (c < 0) out += "-";
    } else {
      out += c < 0 ? " - " : " + ";
    }
    const double m = static_cast<double>(std::abs(c));
    if (body.empty()) {
      out += format_number(m);
    } else {
      if (m != 1.0) out += format_number(m) + "*";
      out += body;
    }
  };
  for (const auto& [v, c] : coeffs_) append(c, v);
  if (constant_ != 0.0 || out.empty()) append(constant_, "");
  return out;
}

}  // namespace hmte
