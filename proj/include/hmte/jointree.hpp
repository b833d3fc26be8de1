// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hmte/model.hpp"
#include "hmte/potential.hpp"

namespace hmte {

using Evidence = std::map<VarId, Observation>;

struct JoinTreeNode {
  std::string id;
  std::vector<VarId> label;             // sorted
  std::vector<std::size_t> neighbors;   // node indices
  std::vector<std::size_t> assigned;    // indices into JoinTree::potentials()
};

/// A binary join tree with the network's potentials assigned to nodes.
class JoinTree {
 public:
  // Uses the model's `jointree` section when present, otherwise builds one.
  static JoinTree for_network(const Network& n);
  // Eliminates deterministic variables (children first) and then by minimum
  // degree on the moral graph, unless `order` is given.
  static JoinTree build(const Network& n, const std::vector<VarId>& order = {});
  static JoinTree from_spec(const Network& n, const std::vector<JoinTreeNodeSpec>& spec);

  const std::vector<JoinTreeNode>& nodes() const { return nodes_; }
  const std::vector<MixedPotential>& potentials() const { return potentials_; }
  // The variable whose conditional each potential encodes.
  const std::vector<VarId>& potential_names() const { return names_; }
  std::size_t node_index(const std::string& id) const;
  // Smallest node whose label contains every variable in vars.
  std::size_t smallest_node_with(const std::vector<VarId>& vars) const;

  // Throws InvalidJoinTree on a broken tree.
  void validate() const;

 private:
  std::vector<JoinTreeNode> nodes_;
  std::vector<MixedPotential> potentials_;
  std::vector<VarId> names_;
};

/// Potentials kept as an uncombined list together with the observations that
/// still have to be entered into them.
struct Bucket {
  std::vector<MixedPotential> potentials;
  Evidence findings;
};

/// Two-phase message passing with the given evidence.  All messages are
/// computed on construction; queries only combine cached messages.
class Propagation {
 public:
  Propagation(const JoinTree& tree, Evidence evidence, std::optional<std::size_t> root = std::nullopt);

  const JoinTree& tree() const { return *tree_; }
  const Evidence& evidence() const { return evidence_; }
  const Bucket& message(std::size_t from, std::size_t to) const;

  // Everything known at a node: its potentials, findings and incoming messages.
  Bucket node_inputs(std::size_t node) const;

 private:
  const Bucket& compute(std::size_t from, std::size_t to);

  const JoinTree* tree_;
  Evidence evidence_;
  std::vector<Evidence> node_findings_;
  std::map<std::pair<std::size_t, std::size_t>, Bucket> messages_;
};

/// A univariate marginal in materialised form.
struct Marginal {
  VarId var;
  bool discrete = false;
  std::vector<std::string> states;                 // discrete only
  std::vector<double> probabilities;               // discrete only, per state
  std::vector<std::pair<double, double>> points;   // (value, mass), sorted by value
  std::optional<PiecewiseFn> density;

  // Mass plus the integral of the density part.
  double total() const;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

// Checks variable names and value types against the network.
void check_evidence(const Network& n, const Evidence& e);

// Enters the findings on the variables in each potential and eliminates
// every variable outside keep, one at a time.
std::vector<MixedPotential> eliminate_bucket(Bucket bucket, const std::vector<VarId>& keep,
                                             const std::string& where = "");

// Unnormalised marginal of v.
Marginal query_marginal(const Propagation& state, const VarId& v);
// Same result from one bucket holding every potential of the network.
Marginal brute_force_marginal(const Network& n, const Evidence& evidence, const VarId& v);

// A potential over v alone (plus constants) as masses and a density.
Marginal materialize(const MixedPotential& p, const VarId& v);

// (normalised marginal, evidence weight).
std::pair<Marginal, double> normalize_marginal(const Marginal& m);

// A discrete marginal reports moments of its state index.
Moments posterior_moments(const Marginal& normalized);
Moments posterior_moments(const Propagation& state, const VarId& v);

}  // namespace hmte
