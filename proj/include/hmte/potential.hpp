// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hmte/linexpr.hpp"
#include "hmte/piecewise.hpp"

namespace hmte {

/// weight * delta(lhs).  A single-variable lhs is a point constraint.
struct WeightedEquation {
  double weight = 1.0;
  LinExpr lhs;
};

/// A sum of weighted equations.  When `head` is set every equation has
/// coefficient 1 on it.
class DeterministicPotential {
 public:
  explicit DeterministicPotential(std::vector<WeightedEquation> factors,
                                  std::optional<VarId> head = std::nullopt);

  // head = expr, weight 1.
  static DeterministicPotential conditional(const VarId& head, const LinExpr& expr);
  // v = c as a point constraint.
  static DeterministicPotential point(const VarId& v, double c, double weight = 1.0);

  const std::vector<WeightedEquation>& factors() const { return factors_; }
  const std::vector<VarId>& vars() const { return vars_; }
  const std::optional<VarId>& head() const { return head_; }
  bool has_var(const VarId& v) const;
  double total_weight() const;

  std::string to_string() const;

 private:
  std::vector<WeightedEquation> factors_;
  std::vector<VarId> vars_;
  std::optional<VarId> head_;
};

struct Mixture;

/// One factor of the density part.  Factors are immutable and shared, so
/// copies are cheap and `same` compares identity.
class DensityFactor {
 public:
  enum class Kind { Identity, Density, Deterministic, Mixture };

  DensityFactor() = default;  // identity
  explicit DensityFactor(PiecewiseFn f);
  explicit DensityFactor(DeterministicPotential d);
  explicit DensityFactor(Mixture m);

  Kind kind() const;
  const PiecewiseFn& density() const;
  const DeterministicPotential& deterministic() const;
  const Mixture& mixture() const;

  const std::vector<VarId>& vars() const;
  bool has_var(const VarId& v) const;
  bool same(const DensityFactor& o) const;

  std::string to_string() const;

 private:
  std::variant<std::monostate, std::shared_ptr<const PiecewiseFn>,
               std::shared_ptr<const DeterministicPotential>, std::shared_ptr<const Mixture>>
      rep_;
};

using Product = std::vector<DensityFactor>;

struct Branch {
  double weight = 1.0;
  Product factors;
};

/// sum_b weight_b * prod(factors_b), kept unexpanded.
struct Mixture {
  std::vector<Branch> branches;
  std::vector<VarId> vars;  // union over branches, sorted

  explicit Mixture(std::vector<Branch> b);
};

struct PotentialEntry {
  std::vector<double> masses;  // product; empty means 1
  Product factors;             // product; empty means identity

  double mass() const;
};

struct DiscreteVariable {
  VarId name;
  std::vector<std::string> states;
};

// State index per discrete variable, in discrete_vars() order.
using Configuration = std::vector<int>;

/// A mixed potential: for each discrete configuration a mass part and a
/// density part, both stored as unmultiplied factor lists.  Configurations
/// absent from the table are zero.
class MixedPotential {
 public:
  MixedPotential() = default;  // vacuous over no variables
  MixedPotential(std::vector<DiscreteVariable> discrete, std::vector<VarId> continuous,
                 std::map<Configuration, PotentialEntry> table);

  static MixedPotential vacuous();

  const std::vector<DiscreteVariable>& discrete_vars() const { return discrete_; }
  const std::vector<VarId>& continuous_vars() const { return continuous_; }
  const std::map<Configuration, PotentialEntry>& table() const { return table_; }

  bool has_var(const VarId& v) const;
  bool is_discrete(const VarId& v) const;
  std::vector<VarId> domain() const;
  int discrete_index(const VarId& v) const;  // -1 if absent
  int state_index(const VarId& v, const std::string& label) const;

  // nullptr when the configuration is zero.
  const PotentialEntry* at(const Configuration& c) const;
  const PotentialEntry* at(const std::map<VarId, std::string>& labels) const;

  std::string to_string() const;

 private:
  std::vector<DiscreteVariable> discrete_;
  std::vector<VarId> continuous_;
  std::map<Configuration, PotentialEntry> table_;
};

using Observation = std::variant<std::string, double>;

MixedPotential combine(const MixedPotential& a, const MixedPotential& b);

MixedPotential marginalize(const MixedPotential& p, const VarId& v);
MixedPotential marg_discrete(const MixedPotential& p, const VarId& y);
MixedPotential marg_cont_density(const MixedPotential& p, const VarId& z);

DeterministicPotential marg_det_pair(const DeterministicPotential& d1,
                                     const DeterministicPotential& d2, const VarId& z);
std::pair<double, DensityFactor> marg_single_det(const DeterministicPotential& d,
                                                 const VarId& z);
PiecewiseFn marg_density_det(const PiecewiseFn& f, const DeterministicPotential& d,
                             const VarId& z);

MixedPotential restrict(const MixedPotential& p, const VarId& v, const Observation& value);

// Simplifies a product: drops identities, folds scalar densities, single
// equations and single-branch mixtures into the returned scale.  A scale of
// zero means the product vanishes.
std::pair<double, Product> normalize_product(const Product& factors);

// Pointwise value of a product without deterministic factors.
double evaluate_product(const Product& factors, const Point& p);

// Multiplies out a product of densities and mixtures of densities.
PiecewiseFn materialize_product(const Product& factors);

std::vector<VarId> product_vars(const Product& factors);

}  // namespace hmte
