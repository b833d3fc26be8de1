// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/potential.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {

namespace {

std::vector<VarId> merge_vars(std::vector<VarId> a, const std::vector<VarId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

bool contains(const std::vector<VarId>& vs, const VarId& v) {
  return std::binary_search(vs.begin(), vs.end(), v);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

// Point-hit tolerance when evidence lands on an equation.
bool near_zero(double g, double scale) { return std::abs(g) <= kFeasibilityTol * (1.0 + scale); }

const std::vector<VarId> kNoVars;

}  // namespace

// ---------------------------------------------------------------------------
// DeterministicPotential

DeterministicPotential::DeterministicPotential(std::vector<WeightedEquation> factors,
                                               std::optional<VarId> head)
    : factors_(std::move(factors)), head_(std::move(head)) {
  if (factors_.empty()) raise(ErrorKind::InvalidArgument, "deterministic potential without equations");
  for (const auto& eq : factors_) {
    if (!(eq.weight > 0.0) || !std::isfinite(eq.weight))
      raise(ErrorKind::InvalidArgument, "equation weight must be positive");
    if (eq.lhs.is_constant())
      raise(ErrorKind::InvalidArgument, "equation has no variables: " + eq.lhs.to_string());
    vars_ = merge_vars(vars_, eq.lhs.vars());
    if (head_ && std::abs(eq.lhs.coeff(*head_) - 1.0) > 1e-9)
      raise(ErrorKind::InvalidArgument,
            "coefficient on head " + *head_ + " must be 1 in " + eq.lhs.to_string());
  }
}

DeterministicPotential DeterministicPotential::conditional(const VarId& head, const LinExpr& expr) {
  if (expr.has(head)) raise(ErrorKind::InvalidArgument, "conditional expression mentions its head");
  return DeterministicPotential({{1.0, LinExpr::variable(head) - expr}}, head);
}

DeterministicPotential DeterministicPotential::point(const VarId& v, double c, double weight) {
  return DeterministicPotential({{weight, LinExpr::variable(v) - LinExpr(c)}}, v);
}

bool DeterministicPotential::has_var(const VarId& v) const { return contains(vars_, v); }

double DeterministicPotential::total_weight() const {
  double s = 0.0;
  for (const auto& eq : factors_) s += eq.weight;
  return s;
}

std::string DeterministicPotential::to_string() const {
  std::string out = "{";
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) out += ", ";
    out += fmt(factors_[i].weight) + "*[" + factors_[i].lhs.to_string() + " = 0]";
  }
  return out + "}";
}

// ---------------------------------------------------------------------------
// DensityFactor

DensityFactor::DensityFactor(PiecewiseFn f) : rep_(std::make_shared<const PiecewiseFn>(std::move(f))) {}
DensityFactor::DensityFactor(DeterministicPotential d)
    : rep_(std::make_shared<const DeterministicPotential>(std::move(d))) {}
DensityFactor::DensityFactor(Mixture m) : rep_(std::make_shared<const Mixture>(std::move(m))) {}

DensityFactor::Kind DensityFactor::kind() const { return static_cast<Kind>(rep_.index()); }

const PiecewiseFn& DensityFactor::density() const {
  if (kind() != Kind::Density) raise(ErrorKind::InvalidArgument, "factor is not a density");
  return *std::get<1>(rep_);
}

const DeterministicPotential& DensityFactor::deterministic() const {
  if (kind() != Kind::Deterministic) raise(ErrorKind::InvalidArgument, "factor is not deterministic");
  return *std::get<2>(rep_);
}

const Mixture& DensityFactor::mixture() const {
  if (kind() != Kind::Mixture) raise(ErrorKind::InvalidArgument, "factor is not a mixture");
  return *std::get<3>(rep_);
}

const std::vector<VarId>& DensityFactor::vars() const {
  switch (kind()) {
    case Kind::Identity: return kNoVars;
    case Kind::Density: return density().vars();
    case Kind::Deterministic: return deterministic().vars();
    case Kind::Mixture: return mixture().vars;
  }
  return kNoVars;
}

bool DensityFactor::has_var(const VarId& v) const { return contains(vars(), v); }

bool DensityFactor::same(const DensityFactor& o) const {
  if (rep_.index() != o.rep_.index()) return false;
  return std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return true;
        } else {
          return a.get() == std::get<T>(o.rep_).get();
        }
      },
      rep_);
}

std::string DensityFactor::to_string() const {
  switch (kind()) {
    case Kind::Identity: return "iota";
    case Kind::Density: return density().to_string();
    case Kind::Deterministic: return deterministic().to_string();
    case Kind::Mixture: {
      std::string out = "mix{";
      const auto& bs = mixture().branches;
      for (std::size_t i = 0; i < bs.size(); ++i) {
        if (i) out += " + ";
        out += fmt(bs[i].weight) + "*(";
        for (std::size_t j = 0; j < bs[i].factors.size(); ++j) {
          if (j) out += " . ";
          out += bs[i].factors[j].to_string();
        }
        out += ")";
      }
      return out + "}";
    }
  }
  return "";
}

Mixture::Mixture(std::vector<Branch> b) : branches(std::move(b)) {
  for (const auto& br : branches) vars = merge_vars(vars, product_vars(br.factors));
}

std::vector<VarId> product_vars(const Product& factors) {
  std::vector<VarId> out;
  for (const auto& f : factors) out = merge_vars(out, f.vars());
  return out;
}

double PotentialEntry::mass() const {
  double m = 1.0;
  for (double x : masses) m *= x;
  return m;
}

// ---------------------------------------------------------------------------
// Product simplification and evaluation

std::pair<double, Product> normalize_product(const Product& in) {
  double s = 1.0;
  Product out;
  for (const auto& f : in) {
    switch (f.kind()) {
      case DensityFactor::Kind::Identity:
        break;
      case DensityFactor::Kind::Density: {
        const auto& d = f.density();
        if (d.pieces().empty()) return {0.0, {}};
        if (d.is_scalar())
          s *= d.scalar_value();
        else
          out.push_back(f);
        break;
      }
      case DensityFactor::Kind::Deterministic: {
        const auto& d = f.deterministic();
        if (d.factors().size() == 1 && d.factors()[0].weight != 1.0) {
          s *= d.factors()[0].weight;
          out.emplace_back(DeterministicPotential({{1.0, d.factors()[0].lhs}}, d.head()));
        } else {
          out.push_back(f);
        }
        break;
      }
      case DensityFactor::Kind::Mixture: {
        std::vector<Branch> bs;
        for (const auto& b : f.mixture().branches) {
          auto [bscale, bp] = normalize_product(b.factors);
          const double w = b.weight * bscale;
          if (w != 0.0) bs.push_back({w, std::move(bp)});
        }
        if (bs.empty()) return {0.0, {}};
        const bool all_empty =
            std::all_of(bs.begin(), bs.end(), [](const Branch& b) { return b.factors.empty(); });
        if (all_empty) {
          double t = 0.0;
          for (const auto& b : bs) t += b.weight;
          s *= t;
          break;
        }
        if (bs.size() == 1) {
          s *= bs[0].weight;
          out.insert(out.end(), bs[0].factors.begin(), bs[0].factors.end());
          break;
        }
        const bool all_det = std::all_of(bs.begin(), bs.end(), [](const Branch& b) {
          return b.factors.size() == 1 &&
                 b.factors[0].kind() == DensityFactor::Kind::Deterministic;
        });
        if (all_det) {
          std::vector<WeightedEquation> eqs;
          std::optional<VarId> head = bs[0].factors[0].deterministic().head();
          for (const auto& b : bs) {
            const auto& d = b.factors[0].deterministic();
            if (d.head() != head) head.reset();
            for (const auto& eq : d.factors()) eqs.push_back({eq.weight * b.weight, eq.lhs});
          }
          out.emplace_back(DeterministicPotential(std::move(eqs), head));
          break;
        }
        out.emplace_back(Mixture(std::move(bs)));
        break;
      }
    }
    if (s == 0.0) return {0.0, {}};
  }
  return {s, out};
}

double evaluate_product(const Product& factors, const Point& p) {
  double v = 1.0;
  for (const auto& f : factors) {
    switch (f.kind()) {
      case DensityFactor::Kind::Identity:
        break;
      case DensityFactor::Kind::Density:
        v *= evaluate(f.density(), p);
        break;
      case DensityFactor::Kind::Deterministic:
        raise(ErrorKind::InvalidArgument, "deterministic factor has no pointwise value");
      case DensityFactor::Kind::Mixture: {
        double t = 0.0;
        for (const auto& b : f.mixture().branches) t += b.weight * evaluate_product(b.factors, p);
        v *= t;
        break;
      }
    }
    if (v == 0.0) return 0.0;
  }
  return v;
}

PiecewiseFn materialize_product(const Product& factors) {
  PiecewiseFn acc = PiecewiseFn::identity();
  for (const auto& f : factors) {
    switch (f.kind()) {
      case DensityFactor::Kind::Identity:
        break;
      case DensityFactor::Kind::Density:
        acc = multiply(acc, f.density());
        break;
      case DensityFactor::Kind::Deterministic:
        raise(ErrorKind::UnsupportedElimination,
              "deterministic factor cannot be materialised as a density: " + f.to_string());
      case DensityFactor::Kind::Mixture: {
        PiecewiseFn sum;
        bool first = true;
        for (const auto& b : f.mixture().branches) {
          PiecewiseFn t = scale(materialize_product(b.factors), b.weight);
          sum = first ? t : add(sum, t);
          first = false;
        }
        acc = multiply(acc, sum);
        break;
      }
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// MixedPotential

MixedPotential::MixedPotential(std::vector<DiscreteVariable> discrete,
                               std::vector<VarId> continuous,
                               std::map<Configuration, PotentialEntry> table) {
  std::vector<std::size_t> order(discrete.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return discrete[a].name < discrete[b].name; });
  for (std::size_t i : order) {
    if (discrete[i].states.empty())
      raise(ErrorKind::InvalidArgument, "discrete variable " + discrete[i].name + " has no states");
    discrete_.push_back(discrete[i]);
  }
  for (std::size_t i = 1; i < discrete_.size(); ++i)
    if (discrete_[i].name == discrete_[i - 1].name)
      raise(ErrorKind::InvalidArgument, "duplicate discrete variable " + discrete_[i].name);

  std::sort(continuous.begin(), continuous.end());
  continuous.erase(std::unique(continuous.begin(), continuous.end()), continuous.end());
  continuous_ = std::move(continuous);

  for (auto& [cfg, entry] : table) {
    if (cfg.size() != discrete_.size())
      raise(ErrorKind::InvalidArgument, "configuration size does not match discrete domain");
    Configuration sorted(cfg.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int s = cfg[order[k]];
      if (s < 0 || s >= static_cast<int>(discrete_[k].states.size()))
        raise(ErrorKind::UnknownState, "state index out of range for " + discrete_[k].name);
      sorted[k] = s;
    }
    if (entry.mass() == 0.0) continue;
    continuous_ = merge_vars(continuous_, product_vars(entry.factors));
    Product kept;
    for (auto& f : entry.factors)
      if (f.kind() != DensityFactor::Kind::Identity) kept.push_back(std::move(f));
    entry.factors = std::move(kept);
    table_[sorted] = std::move(entry);
  }
  for (const auto& d : discrete_)
    if (contains(continuous_, d.name))
      raise(ErrorKind::DomainMismatch, d.name + " is both discrete and continuous");
}

MixedPotential MixedPotential::vacuous() { return MixedPotential({}, {}, {{Configuration{}, {}}}); }

bool MixedPotential::has_var(const VarId& v) const {
  return is_discrete(v) || contains(continuous_, v);
}

bool MixedPotential::is_discrete(const VarId& v) const { return discrete_index(v) >= 0; }

std::vector<VarId> MixedPotential::domain() const {
  std::vector<VarId> out;
  for (const auto& d : discrete_) out.push_back(d.name);
  return merge_vars(out, continuous_);
}

int MixedPotential::discrete_index(const VarId& v) const {
  for (std::size_t i = 0; i < discrete_.size(); ++i)
    if (discrete_[i].name == v) return static_cast<int>(i);
  return -1;
}

int MixedPotential::state_index(const VarId& v, const std::string& label) const {
  const int i = discrete_index(v);
  if (i < 0) raise(ErrorKind::UnknownVariable, "no discrete variable " + v);
  const auto& st = discrete_[i].states;
  const auto it = std::find(st.begin(), st.end(), label);
  if (it == st.end()) raise(ErrorKind::UnknownState, "unknown state '" + label + "' for " + v);
  return static_cast<int>(it - st.begin());
}

const PotentialEntry* MixedPotential::at(const Configuration& c) const {
  const auto it = table_.find(c);
  return it == table_.end() ? nullptr : &it->second;
}

const PotentialEntry* MixedPotential::at(const std::map<VarId, std::string>& labels) const {
  Configuration c;
  for (const auto& d : discrete_) {
    const auto it = labels.find(d.name);
    if (it == labels.end()) raise(ErrorKind::InvalidArgument, "missing state for " + d.name);
    c.push_back(state_index(d.name, it->second));
  }
  return at(c);
}

std::string MixedPotential::to_string() const {
  std::ostringstream os;
  os << "potential over {";
  const auto dom = domain();
  for (std::size_t i = 0; i < dom.size(); ++i) os << (i ? ", " : "") << dom[i];
  os << "}\n";
  for (const auto& [cfg, e] : table_) {
    os << "  (";
    for (std::size_t i = 0; i < cfg.size(); ++i)
      os << (i ? ", " : "") << discrete_[i].name << "=" << discrete_[i].states[cfg[i]];
    os << ") mass " << fmt(e.mass()) << " :";
    if (e.factors.empty()) os << " iota";
    for (const auto& f : e.factors) os << " " << f.to_string();
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Combination

MixedPotential combine(const MixedPotential& a, const MixedPotential& b) {
  std::vector<DiscreteVariable> vars = a.discrete_vars();
  std::vector<int> b_pos;  // position of each of b's discrete vars in `vars`
  for (const auto& d : b.discrete_vars()) {
    const int i = a.discrete_index(d.name);
    if (i >= 0) {
      if (a.discrete_vars()[i].states != d.states)
        raise(ErrorKind::DomainMismatch, "state spaces differ for " + d.name);
      b_pos.push_back(i);
    } else {
      b_pos.push_back(static_cast<int>(vars.size()));
      vars.push_back(d);
    }
  }
  std::vector<VarId> cont = merge_vars(a.continuous_vars(), b.continuous_vars());

  std::map<Configuration, PotentialEntry> table;
  const std::size_t na = a.discrete_vars().size();
  for (const auto& [ca, ea] : a.table()) {
    for (const auto& [cb, eb] : b.table()) {
      Configuration c(vars.size(), -1);
      std::copy(ca.begin(), ca.end(), c.begin());
      bool ok = true;
      for (std::size_t k = 0; k < cb.size() && ok; ++k) {
        const auto pos = static_cast<std::size_t>(b_pos[k]);
        if (pos < na)
          ok = c[pos] == cb[k];
        else
          c[pos] = cb[k];
      }
      if (!ok) continue;
      PotentialEntry e = ea;
      e.masses.insert(e.masses.end(), eb.masses.begin(), eb.masses.end());
      e.factors.insert(e.factors.end(), eb.factors.begin(), eb.factors.end());
      table[c] = std::move(e);
    }
  }
  return MixedPotential(std::move(vars), std::move(cont), std::move(table));
}

// ---------------------------------------------------------------------------
// Marginalisation

namespace {

std::vector<WeightedEquation> det_pair_equations(const DeterministicPotential& d1,
                                                 const DeterministicPotential& d2,
                                                 const VarId& z, std::optional<VarId>* head_out) {
  std::optional<VarId> head;
  if (d2.head() && *d2.head() != z)
    head = d2.head();
  else if (d1.head() && *d1.head() != z)
    head = d1.head();

  std::vector<WeightedEquation> out;
  bool all_have_head = head.has_value();
  for (const auto& p : d1.factors()) {
    const double a = p.lhs.coeff(z);
    if (std::abs(a) < kZeroEps)
      raise(ErrorKind::NonInvertibleEquation, "no " + z + " in " + p.lhs.to_string());
    const LinExpr e = p.lhs.solve_for(z);
    for (const auto& q : d2.factors()) {
      if (std::abs(q.lhs.coeff(z)) < kZeroEps)
        raise(ErrorKind::NonInvertibleEquation, "no " + z + " in " + q.lhs.to_string());
      LinExpr g = q.lhs.substitute(z, e);
      double w = p.weight * q.weight / std::abs(a);
      if (g.is_constant()) {
        if (near_zero(g.constant(), 1.0))
          raise(ErrorKind::UnsupportedElimination,
                "equations " + p.lhs.to_string() + " and " + q.lhs.to_string() +
                    " are linearly dependent");
        continue;  // inconsistent pair contributes nothing
      }
      if (head && g.has(*head)) {
        const double c = g.coeff(*head);
        g *= 1.0 / c;
        w /= std::abs(c);
      } else {
        all_have_head = false;
      }
      out.push_back({w, std::move(g)});
    }
  }
  if (head_out) *head_out = all_have_head ? head : std::nullopt;
  return out;
}

bool needs_expansion(const DensityFactor& f, const VarId& z) {
  if (f.kind() == DensityFactor::Kind::Mixture) return true;
  if (f.kind() == DensityFactor::Kind::Deterministic) {
    for (const auto& eq : f.deterministic().factors())
      if (!eq.lhs.has(z)) return true;
  }
  return false;
}

std::vector<Branch> eliminate_product(const Product& w, const VarId& z);

// Eliminates z from a product that may contain factors without z.
std::vector<Branch> eliminate_split(const Product& p, const VarId& z) {
  Product with, without;
  for (const auto& f : p) (f.has_var(z) ? with : without).push_back(f);
  if (with.empty()) return {{1.0, p}};
  auto sub = eliminate_product(with, z);
  for (auto& b : sub) b.factors.insert(b.factors.begin(), without.begin(), without.end());
  return sub;
}

// Every factor of `w` contains z.
std::vector<Branch> eliminate_product(const Product& w, const VarId& z) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!needs_expansion(w[i], z)) continue;
    Product rest = w;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    std::vector<Branch> parts;
    if (w[i].kind() == DensityFactor::Kind::Mixture) {
      parts = w[i].mixture().branches;
    } else {
      const auto& d = w[i].deterministic();
      std::vector<WeightedEquation> in, out;
      for (const auto& eq : d.factors()) (eq.lhs.has(z) ? in : out).push_back(eq);
      std::optional<VarId> head = d.head() && *d.head() != z ? d.head() : std::nullopt;
      parts.push_back({1.0, {DensityFactor(DeterministicPotential(in, d.head()))}});
      parts.push_back({1.0, {DensityFactor(DeterministicPotential(out, head))}});
    }
    std::vector<Branch> result;
    for (const auto& part : parts) {
      Product p = rest;
      p.insert(p.end(), part.factors.begin(), part.factors.end());
      for (auto& b : eliminate_split(p, z)) result.push_back({part.weight * b.weight, b.factors});
    }
    return result;
  }

  std::vector<PiecewiseFn> dens;
  std::vector<const DeterministicPotential*> dets;
  for (const auto& f : w) {
    if (f.kind() == DensityFactor::Kind::Density)
      dens.push_back(f.density());
    else if (f.kind() == DensityFactor::Kind::Deterministic)
      dets.push_back(&f.deterministic());
  }

  if (dets.empty()) {
    PiecewiseFn f = dens[0];
    for (std::size_t i = 1; i < dens.size(); ++i) f = multiply(f, dens[i]);
    PiecewiseFn g = eliminate_integrate(f, z);
    if (g.is_scalar()) return {{g.scalar_value(), {}}};
    return {{1.0, {DensityFactor(std::move(g))}}};
  }
  if (dets.size() == 1 && dens.empty()) {
    auto [m, id] = marg_single_det(*dets[0], z);
    return {{m, {}}};
  }
  if (dets.size() == 2 && dens.empty()) {
    const bool swap = dets[1]->head() == z && dets[0]->head() != z;
    const auto& d1 = swap ? *dets[1] : *dets[0];
    const auto& d2 = swap ? *dets[0] : *dets[1];
    std::optional<VarId> head;
    auto eqs = det_pair_equations(d1, d2, z, &head);
    if (eqs.empty()) return {};
    return {{1.0, {DensityFactor(DeterministicPotential(std::move(eqs), head))}}};
  }
  if (dets.size() == 1) {
    PiecewiseFn f = dens[0];
    for (std::size_t i = 1; i < dens.size(); ++i) f = multiply(f, dens[i]);
    std::vector<Branch> out;
    for (const auto& eq : dets[0]->factors()) {
      const double a = eq.lhs.coeff(z);
      if (std::abs(a) < kZeroEps)
        raise(ErrorKind::NonInvertibleEquation, "no " + z + " in " + eq.lhs.to_string());
      PiecewiseFn g = substitute_linear(f, z, eq.lhs.solve_for(z));
      const double wt = eq.weight / std::abs(a);
      if (g.is_scalar())
        out.push_back({wt * g.scalar_value(), {}});
      else
        out.push_back({wt, {DensityFactor(std::move(g))}});
    }
    return out;
  }
  raise(ErrorKind::UnsupportedElimination,
        "eliminating " + z + " needs " + std::to_string(dets.size()) +
            " deterministic and " + std::to_string(dens.size()) + " density factors");
}

// Replaces the listed branches by a product, folding scales into the mass.
std::optional<PotentialEntry> make_entry(std::vector<double> masses, Product outer,
                                         std::vector<Branch> branches) {
  if (branches.empty()) return std::nullopt;
  if (branches.size() == 1) {
    masses.push_back(branches[0].weight);
    outer.insert(outer.end(), branches[0].factors.begin(), branches[0].factors.end());
  } else {
    outer.emplace_back(Mixture(std::move(branches)));
  }
  auto [s, prod] = normalize_product(outer);
  if (s == 0.0) return std::nullopt;
  std::vector<double> kept;
  for (double m : masses)
    if (m != 1.0) kept.push_back(m);
  if (s != 1.0) kept.push_back(s);
  return PotentialEntry{std::move(kept), std::move(prod)};
}

std::vector<VarId> without(std::vector<VarId> vs, const VarId& v) {
  vs.erase(std::remove(vs.begin(), vs.end(), v), vs.end());
  return vs;
}

MixedPotential marg_continuous(const MixedPotential& p, const VarId& z) {
  std::map<Configuration, PotentialEntry> table;
  for (const auto& [cfg, e] : p.table()) {
    Product with, rest;
    for (const auto& f : e.factors) (f.has_var(z) ? with : rest).push_back(f);
    if (with.empty()) {
      table[cfg] = e;
      continue;
    }
    auto entry = make_entry(e.masses, rest, eliminate_product(with, z));
    if (entry) table[cfg] = std::move(*entry);
  }
  return MixedPotential(p.discrete_vars(), without(p.continuous_vars(), z), std::move(table));
}

}  // namespace

MixedPotential marginalize(const MixedPotential& p, const VarId& v) {
  if (p.is_discrete(v)) return marg_discrete(p, v);
  if (!p.has_var(v)) raise(ErrorKind::UnknownVariable, v + " is not in the potential's domain");
  return marg_continuous(p, v);
}

MixedPotential marg_discrete(const MixedPotential& p, const VarId& y) {
  const int idx = p.discrete_index(y);
  if (idx < 0) raise(ErrorKind::UnknownVariable, "no discrete variable " + y);

  std::vector<DiscreteVariable> rest = p.discrete_vars();
  rest.erase(rest.begin() + idx);

  std::map<Configuration, std::vector<const PotentialEntry*>> groups;
  for (const auto& [cfg, e] : p.table()) {
    Configuration r = cfg;
    r.erase(r.begin() + idx);
    groups[r].push_back(&e);
  }

  std::map<Configuration, PotentialEntry> table;
  for (const auto& [r, es] : groups) {
    if (es.size() == 1) {
      table[r] = *es[0];
      continue;
    }
    // Factors shared (by identity) across every state stay outside the sum.
    std::vector<Product> varying;
    for (const auto* e : es) varying.push_back(e->factors);
    Product common;
    for (const auto& f : es[0]->factors) {
      bool everywhere = true;
      std::vector<std::size_t> hit(es.size());
      for (std::size_t k = 0; k < es.size() && everywhere; ++k) {
        const auto it = std::find_if(varying[k].begin(), varying[k].end(),
                                     [&](const DensityFactor& g) { return g.same(f); });
        everywhere = it != varying[k].end();
        if (everywhere) hit[k] = static_cast<std::size_t>(it - varying[k].begin());
      }
      if (!everywhere) continue;
      common.push_back(f);
      for (std::size_t k = 0; k < es.size(); ++k)
        varying[k].erase(varying[k].begin() + static_cast<std::ptrdiff_t>(hit[k]));
    }
    std::vector<Branch> branches;
    for (std::size_t k = 0; k < es.size(); ++k) branches.push_back({es[k]->mass(), varying[k]});
    auto entry = make_entry({}, common, std::move(branches));
    if (entry) table[r] = std::move(*entry);
  }
  return MixedPotential(std::move(rest), p.continuous_vars(), std::move(table));
}

MixedPotential marg_cont_density(const MixedPotential& p, const VarId& z) {
  if (p.is_discrete(z) || !p.has_var(z))
    raise(ErrorKind::InvalidArgument, z + " is not a continuous variable of the potential");
  for (const auto& [cfg, e] : p.table())
    for (const auto& f : e.factors)
      if (f.has_var(z) && f.kind() != DensityFactor::Kind::Density)
        raise(ErrorKind::InvalidArgument, z + " appears in a non-density factor");
  return marg_continuous(p, z);
}

DeterministicPotential marg_det_pair(const DeterministicPotential& d1,
                                     const DeterministicPotential& d2, const VarId& z) {
  std::optional<VarId> head;
  auto eqs = det_pair_equations(d1, d2, z, &head);
  if (eqs.empty())
    raise(ErrorKind::DegenerateDensity, "every pair of equations is inconsistent");
  return DeterministicPotential(std::move(eqs), head);
}

std::pair<double, DensityFactor> marg_single_det(const DeterministicPotential& d, const VarId& z) {
  double m = 0.0;
  for (const auto& eq : d.factors()) {
    const double a = eq.lhs.coeff(z);
    if (std::abs(a) < kZeroEps)
      raise(ErrorKind::NonInvertibleEquation, "no " + z + " in " + eq.lhs.to_string());
    m += eq.weight / std::abs(a);
  }
  return {m, DensityFactor()};
}

PiecewiseFn marg_density_det(const PiecewiseFn& f, const DeterministicPotential& d,
                             const VarId& z) {
  PiecewiseFn sum;
  bool first = true;
  for (const auto& eq : d.factors()) {
    const double a = eq.lhs.coeff(z);
    if (std::abs(a) < kZeroEps)
      raise(ErrorKind::NonInvertibleEquation, "no " + z + " in " + eq.lhs.to_string());
    PiecewiseFn t = scale(substitute_linear(f, z, eq.lhs.solve_for(z)), eq.weight / std::abs(a));
    sum = first ? t : add(sum, t);
    first = false;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Restriction

namespace {

// Restricted factor: number of point-mass hits, scale and remaining product.
struct Restricted {
  int order = 0;
  double scale = 1.0;
  Product factors;
};

std::optional<Restricted> restrict_product(const Product& p, const VarId& v, double c);

std::optional<Restricted> restrict_factor(const DensityFactor& f, const VarId& v, double c) {
  if (!f.has_var(v)) return Restricted{0, 1.0, {f}};
  switch (f.kind()) {
    case DensityFactor::Kind::Identity:
      return Restricted{};
    case DensityFactor::Kind::Density: {
      PiecewiseFn g = substitute_linear(f.density(), v, LinExpr(c));
      if (g.is_scalar()) return Restricted{0, g.scalar_value(), {}};
      return Restricted{0, 1.0, {DensityFactor(std::move(g))}};
    }
    case DensityFactor::Kind::Deterministic: {
      const auto& d = f.deterministic();
      double hit = 0.0;
      std::vector<WeightedEquation> rest;
      for (const auto& eq : d.factors()) {
        if (!eq.lhs.has(v)) {
          rest.push_back(eq);
          continue;
        }
        const double a = eq.lhs.coeff(v);
        LinExpr g = eq.lhs.substitute(v, LinExpr(c));
        if (g.is_constant()) {
          if (near_zero(g.constant(), std::abs(a * c))) hit += eq.weight / std::abs(a);
          continue;
        }
        if (g.coeffs().size() == 1) {
          const double a1 = g.coeffs().begin()->second;
          if (std::abs(a1) < kZeroEps) raise(ErrorKind::NonInvertibleEquation, g.to_string());
          rest.push_back({eq.weight / std::abs(a1), g * (1.0 / a1)});
          continue;
        }
        rest.push_back({eq.weight, std::move(g)});
      }
      if (hit > 0.0) return Restricted{1, hit, {}};
      if (rest.empty()) return std::nullopt;
      std::optional<VarId> head = d.head();
      if (head == v) head.reset();
      for (const auto& eq : rest)
        if (head && std::abs(eq.lhs.coeff(*head) - 1.0) > 1e-9) head.reset();
      return Restricted{0, 1.0, {DensityFactor(DeterministicPotential(std::move(rest), head))}};
    }
    case DensityFactor::Kind::Mixture: {
      std::vector<std::pair<int, Branch>> parts;
      int best = -1;
      for (const auto& b : f.mixture().branches) {
        auto r = restrict_product(b.factors, v, c);
        if (!r) continue;
        best = std::max(best, r->order);
        parts.push_back({r->order, {b.weight * r->scale, std::move(r->factors)}});
      }
      if (best < 0) return std::nullopt;
      std::vector<Branch> kept;
      for (auto& [o, b] : parts)
        if (o == best) kept.push_back(std::move(b));
      return Restricted{best, 1.0, {DensityFactor(Mixture(std::move(kept)))}};
    }
  }
  return std::nullopt;
}

std::optional<Restricted> restrict_product(const Product& p, const VarId& v, double c) {
  Restricted acc;
  for (const auto& f : p) {
    auto r = restrict_factor(f, v, c);
    if (!r) return std::nullopt;
    acc.order += r->order;
    acc.scale *= r->scale;
    acc.factors.insert(acc.factors.end(), r->factors.begin(), r->factors.end());
  }
  return acc;
}

}  // namespace

MixedPotential restrict(const MixedPotential& p, const VarId& v, const Observation& value) {
  const int idx = p.discrete_index(v);
  if (idx >= 0) {
    const auto* label = std::get_if<std::string>(&value);
    if (!label) raise(ErrorKind::InvalidArgument, "discrete evidence on " + v + " needs a state label");
    const int s = p.state_index(v, *label);
    std::vector<DiscreteVariable> rest = p.discrete_vars();
    rest.erase(rest.begin() + idx);
    std::map<Configuration, PotentialEntry> table;
    for (const auto& [cfg, e] : p.table()) {
      if (cfg[idx] != s) continue;
      Configuration r = cfg;
      r.erase(r.begin() + idx);
      table[r] = e;
    }
    return MixedPotential(std::move(rest), p.continuous_vars(), std::move(table));
  }
  if (!p.has_var(v)) raise(ErrorKind::UnknownVariable, v + " is not in the potential's domain");
  const auto* x = std::get_if<double>(&value);
  if (!x) raise(ErrorKind::InvalidArgument, "continuous evidence on " + v + " needs a number");
  if (!std::isfinite(*x)) raise(ErrorKind::InvalidPoint, "evidence value is not finite");

  std::vector<std::tuple<Configuration, int, PotentialEntry>> parts;
  int best = -1;
  for (const auto& [cfg, e] : p.table()) {
    auto r = restrict_product(e.factors, v, *x);
    if (!r) continue;
    auto entry = make_entry(e.masses, {}, {{r->scale, std::move(r->factors)}});
    if (!entry) continue;
    best = std::max(best, r->order);
    parts.emplace_back(cfg, r->order, std::move(*entry));
  }
  std::map<Configuration, PotentialEntry> table;
  for (auto& [cfg, order, e] : parts)
    if (order == best) table[cfg] = std::move(e);
  return MixedPotential(p.discrete_vars(), without(p.continuous_vars(), v), std::move(table));
}

}  // namespace hmte
