// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hmte/linexpr.hpp"
#include "hmte/piecewise.hpp"
#include "hmte/potential.hpp"

namespace hmte {

enum class VarKind { Discrete, Continuous, Deterministic };

struct Variable {
  VarId name;
  VarKind kind = VarKind::Continuous;
  std::vector<std::string> states;  // discrete only
  std::vector<VarId> parents;
};

struct NormalSpec {
  LinExpr mean;
  double variance = 1.0;
};

using DensitySpec = std::variant<NormalSpec, PiecewiseFn>;

// Conditional distribution of one variable.  Keys are discrete-parent
// configurations (state indices in the order the discrete parents are
// listed).  For densities and equations the empty key means "the same for
// every configuration".
struct Cpd {
  enum class Kind { Table, Density, Equation };

  VarId var;
  Kind kind = Kind::Table;
  std::map<Configuration, std::vector<double>> table;
  std::map<Configuration, DensitySpec> density;
  std::map<Configuration, LinExpr> equations;  // lhs of  lhs = 0
};

struct JoinTreeNodeSpec {
  std::string id;
  std::vector<VarId> variables;
  std::vector<std::string> neighbors;
  std::vector<VarId> assigned;  // variables whose conditionals live here
};

struct Network {
  std::vector<Variable> variables;
  std::map<VarId, Cpd> cpds;
  std::optional<std::vector<JoinTreeNodeSpec>> jointree;

  const Variable& variable(const VarId& v) const;
  bool has_variable(const VarId& v) const;
  std::vector<VarId> discrete_parents(const VarId& v) const;
  std::vector<VarId> continuous_parents(const VarId& v) const;
  bool is_discrete(const VarId& v) const;
};

// Linear expressions: literals, names, +, -, parentheses and products or
// quotients where at most one side mentions a variable.
LinExpr parse_linexpr(std::string_view text);
// "lhs = rhs" as lhs - rhs.
LinExpr parse_equation(std::string_view text);
// "a <= b", "a > b", and chains such as "-3 <= Z1 - X < 0".
std::vector<Constraint> parse_inequalities(std::string_view text);

Network parse_model(std::string_view text);
Network load_model(const std::string& path);
std::string serialize_model(const Network& n);

// Empty when the network is usable.
std::vector<std::string> validate_model(const Network& n);

// The two-piece normal approximation for z with the given mean and variance.
PiecewiseFn make_normal_mte(const VarId& z, const LinExpr& mean, double variance);

// One potential per variable, in declaration order.
std::vector<MixedPotential> compile_potentials(const Network& n);
MixedPotential compile_potential(const Network& n, const VarId& v);

// Parses "Y1=0,Y2=1" against the given discrete parents.
Configuration parse_configuration(const Network& n, const std::vector<VarId>& parents,
                                  std::string_view text);
std::string format_configuration(const Network& n, const std::vector<VarId>& parents,
                                 const Configuration& c);

}  // namespace hmte
