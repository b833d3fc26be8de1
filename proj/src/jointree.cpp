// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/jointree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {

namespace {

std::vector<VarId> family(const Network& n, const VarId& v) {
  std::vector<VarId> f = n.variable(v).parents;
  f.push_back(v);
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

bool covers(const std::vector<VarId>& label, const std::vector<VarId>& vars) {
  return std::all_of(vars.begin(), vars.end(), [&](const VarId& v) {
    return std::binary_search(label.begin(), label.end(), v);
  });
}

std::vector<VarId> sorted_unique(std::vector<VarId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Splits nodes with more than three neighbours into chains of copies.
void binarize(std::vector<JoinTreeNode>& nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    while (nodes[i].neighbors.size() > 3) {
      JoinTreeNode copy;
      copy.id = nodes[i].id + "'";
      copy.label = nodes[i].label;
      const std::size_t c = nodes.size();
      std::vector<std::size_t> moved(nodes[i].neighbors.begin() + 2, nodes[i].neighbors.end());
      nodes[i].neighbors.resize(2);
      nodes[i].neighbors.push_back(c);
      copy.neighbors.push_back(i);
      for (std::size_t m : moved) {
        copy.neighbors.push_back(m);
        std::replace(nodes[m].neighbors.begin(), nodes[m].neighbors.end(), i, c);
      }
      nodes.push_back(std::move(copy));
    }
  }
}

void assign_potentials(const Network& n, std::vector<JoinTreeNode>& nodes,
                       std::vector<MixedPotential>& pots, std::vector<VarId>& names,
                       const std::map<VarId, std::size_t>& fixed) {
  for (const auto& v : n.variables) {
    const auto fam = family(n, v.name);
    std::size_t best = nodes.size();
    const auto it = fixed.find(v.name);
    if (it != fixed.end()) {
      best = it->second;
      if (!covers(nodes[best].label, fam))
        raise(ErrorKind::InvalidJoinTree, "node " + nodes[best].id + " does not contain the family of " + v.name);
    } else {
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (covers(nodes[i].label, fam) && (best == nodes.size() || nodes[i].label.size() < nodes[best].label.size()))
          best = i;
      if (best == nodes.size())
        raise(ErrorKind::InvalidJoinTree, "no node contains the family of " + v.name);
    }
    nodes[best].assigned.push_back(pots.size());
    pots.push_back(compile_potential(n, v.name));
    names.push_back(v.name);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction

JoinTree JoinTree::for_network(const Network& n) {
  return n.jointree ? from_spec(n, *n.jointree) : build(n);
}

JoinTree JoinTree::build(const Network& n, const std::vector<VarId>& order) {
  std::map<VarId, std::set<VarId>> adj;
  for (const auto& v : n.variables) {
    adj[v.name];
    const auto fam = family(n, v.name);
    for (const auto& a : fam)
      for (const auto& b : fam)
        if (a != b) adj[a].insert(b);
  }

  std::vector<VarId> elim = order;
  if (!elim.empty()) {
    auto a = sorted_unique(elim);
    std::vector<VarId> all;
    for (const auto& v : n.variables) all.push_back(v.name);
    if (a.size() != elim.size() || a != sorted_unique(all))
      raise(ErrorKind::InvalidArgument, "elimination order must list every variable once");
  }

  std::vector<std::vector<VarId>> cliques;
  std::vector<VarId> eliminated;
  auto work = adj;
  while (!work.empty()) {
    VarId v;
    if (!order.empty()) {
      v = order[eliminated.size()];
    } else {
      // Deterministic variables go first, children before parents, so that no
      // separator holds two functions of an eliminated variable.
      auto ready = [&](const VarId& x) {
        if (n.variable(x).kind != VarKind::Deterministic) return false;
        for (const auto& c : n.variables)
          if (c.kind == VarKind::Deterministic && work.count(c.name) &&
              std::find(c.parents.begin(), c.parents.end(), x) != c.parents.end())
            return false;
        return true;
      };
      std::pair<int, std::size_t> best{2, SIZE_MAX};
      for (const auto& [x, nb] : work) {
        const std::pair<int, std::size_t> key{ready(x) ? 0 : 1, nb.size()};
        if (key < best) {
          best = key;
          v = x;
        }
      }
    }
    std::vector<VarId> clique(work[v].begin(), work[v].end());
    for (const auto& a : clique)
      for (const auto& b : clique)
        if (a != b) work[a].insert(b);
    for (const auto& a : clique) work[a].erase(v);
    work.erase(v);
    clique.push_back(v);
    cliques.push_back(sorted_unique(clique));
    eliminated.push_back(v);
  }

  std::map<VarId, std::size_t> position;
  for (std::size_t i = 0; i < eliminated.size(); ++i) position[eliminated[i]] = i;

  std::vector<JoinTreeNode> nodes(cliques.size());
  for (std::size_t i = 0; i < cliques.size(); ++i) {
    nodes[i].id = "n" + std::to_string(i);
    nodes[i].label = cliques[i];
  }
  std::size_t previous_root = SIZE_MAX;
  for (std::size_t i = 0; i < cliques.size(); ++i) {
    std::size_t next = SIZE_MAX;
    for (const auto& u : cliques[i])
      if (u != eliminated[i]) next = std::min(next, position[u]);
    if (next == SIZE_MAX) {
      // A new connected component; chain it to the previous one.
      if (previous_root != SIZE_MAX) {
        nodes[i].neighbors.push_back(previous_root);
        nodes[previous_root].neighbors.push_back(i);
      }
      previous_root = i;
      continue;
    }
    nodes[i].neighbors.push_back(next);
    nodes[next].neighbors.push_back(i);
  }
  binarize(nodes);

  JoinTree t;
  t.nodes_ = std::move(nodes);
  assign_potentials(n, t.nodes_, t.potentials_, t.names_, {});
  t.validate();
  return t;
}

JoinTree JoinTree::from_spec(const Network& n, const std::vector<JoinTreeNodeSpec>& spec) {
  JoinTree t;
  std::map<std::string, std::size_t> index;
  for (const auto& s : spec) {
    if (index.count(s.id)) raise(ErrorKind::InvalidJoinTree, "duplicate node id " + s.id);
    index[s.id] = t.nodes_.size();
    JoinTreeNode node;
    node.id = s.id;
    node.label = sorted_unique(s.variables);
    t.nodes_.push_back(std::move(node));
  }
  std::map<VarId, std::size_t> fixed;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (const auto& nb : spec[i].neighbors) {
      const auto it = index.find(nb);
      if (it == index.end()) raise(ErrorKind::InvalidJoinTree, "node " + spec[i].id + " names unknown neighbour " + nb);
      t.nodes_[i].neighbors.push_back(it->second);
    }
    for (const auto& v : spec[i].assigned) {
      if (!n.has_variable(v)) raise(ErrorKind::UnknownVariable, "node " + spec[i].id + " assigns unknown variable " + v);
      if (fixed.count(v)) raise(ErrorKind::InvalidJoinTree, v + " is assigned to two nodes");
      fixed[v] = i;
    }
  }
  for (std::size_t i = 0; i < t.nodes_.size(); ++i)
    for (std::size_t j : t.nodes_[i].neighbors) {
      const auto& back = t.nodes_[j].neighbors;
      if (std::find(back.begin(), back.end(), i) == back.end())
        raise(ErrorKind::InvalidJoinTree,
              "edge " + t.nodes_[i].id + " - " + t.nodes_[j].id + " is listed on one side only");
    }
  assign_potentials(n, t.nodes_, t.potentials_, t.names_, fixed);
  t.validate();
  return t;
}

std::size_t JoinTree::node_index(const std::string& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  raise(ErrorKind::InvalidArgument, "no join tree node " + id);
}

std::size_t JoinTree::smallest_node_with(const std::vector<VarId>& vars) const {
  const auto want = sorted_unique(vars);
  std::size_t best = nodes_.size();
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (covers(nodes_[i].label, want) && (best == nodes_.size() || nodes_[i].label.size() < nodes_[best].label.size()))
      best = i;
  if (best == nodes_.size()) {
    std::string s;
    for (const auto& v : want) s += (s.empty() ? "" : ",") + v;
    raise(ErrorKind::UnknownVariable, "no join tree node contains {" + s + "}");
  }
  return best;
}

void JoinTree::validate() const {
  if (nodes_.empty()) raise(ErrorKind::InvalidJoinTree, "the tree has no nodes");
  std::size_t edges = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nb = nodes_[i].neighbors;
    if (nb.size() > 3)
      raise(ErrorKind::InvalidJoinTree, "node " + nodes_[i].id + " has " + std::to_string(nb.size()) +
                                            " neighbours; a binary join tree allows 3");
    for (std::size_t j : nb) {
      if (j == i) raise(ErrorKind::InvalidJoinTree, "node " + nodes_[i].id + " is its own neighbour");
      if (std::count(nb.begin(), nb.end(), j) > 1)
        raise(ErrorKind::InvalidJoinTree, "node " + nodes_[i].id + " lists a neighbour twice");
    }
    edges += nb.size();
  }
  if (edges != 2 * (nodes_.size() - 1))
    raise(ErrorKind::InvalidJoinTree, "the node graph is not a tree");
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j : nodes_[i].neighbors)
      if (!seen[j]) {
        seen[j] = true;
        ++reached;
        stack.push_back(j);
      }
  }
  if (reached != nodes_.size()) raise(ErrorKind::InvalidJoinTree, "the node graph is not connected");

  // Running intersection: the nodes holding a variable form a subtree.
  std::set<VarId> vars;
  for (const auto& nd : nodes_) vars.insert(nd.label.begin(), nd.label.end());
  for (const auto& v : vars) {
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (std::binary_search(nodes_[i].label.begin(), nodes_[i].label.end(), v)) holders.push_back(i);
    std::vector<bool> in(nodes_.size(), false), hit(nodes_.size(), false);
    for (std::size_t h : holders) in[h] = true;
    std::vector<std::size_t> st{holders.front()};
    hit[holders.front()] = true;
    std::size_t count = 1;
    while (!st.empty()) {
      const std::size_t i = st.back();
      st.pop_back();
      for (std::size_t j : nodes_[i].neighbors)
        if (in[j] && !hit[j]) {
          hit[j] = true;
          ++count;
          st.push_back(j);
        }
    }
    if (count != holders.size())
      raise(ErrorKind::InvalidJoinTree, "the nodes containing " + v + " are not connected");
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (std::size_t p : nodes_[i].assigned)
      if (!covers(nodes_[i].label, sorted_unique(potentials_.at(p).domain())))
        raise(ErrorKind::InvalidJoinTree, "node " + nodes_[i].id + " does not cover the potential of " + names_[p]);
}

// ---------------------------------------------------------------------------
// Elimination

namespace {

std::size_t det_weight(const std::vector<MixedPotential>& pots, const VarId& v) {
  std::size_t k = 0;
  for (const auto& p : pots) {
    if (!p.has_var(v)) continue;
    for (const auto& [cfg, e] : p.table())
      for (const auto& f : e.factors)
        if (f.kind() != DensityFactor::Kind::Density && f.has_var(v)) ++k;
  }
  return k;
}

std::size_t combined_size(const std::vector<MixedPotential>& pots, const VarId& v) {
  std::set<VarId> dom;
  for (const auto& p : pots)
    if (p.has_var(v))
      for (const auto& d : p.domain()) dom.insert(d);
  return dom.size();
}

bool trivial(const MixedPotential& p) {
  if (!p.domain().empty() || p.table().size() != 1) return false;
  const auto& e = p.table().begin()->second;
  return e.factors.empty() && e.mass() == 1.0;
}

}  // namespace

std::vector<MixedPotential> eliminate_bucket(Bucket bucket, const std::vector<VarId>& keep,
                                             const std::string& where) {
  std::vector<MixedPotential> pots;
  for (auto& p : bucket.potentials) {
    for (const auto& [v, obs] : bucket.findings)
      if (p.has_var(v)) p = restrict(p, v, obs);
    if (!trivial(p)) pots.push_back(std::move(p));
  }

  const auto kept = sorted_unique(keep);
  for (;;) {
    std::set<VarId> todo;
    for (const auto& p : pots)
      for (const auto& v : p.domain())
        if (!std::binary_search(kept.begin(), kept.end(), v)) todo.insert(v);
    if (todo.empty()) break;

    std::vector<VarId> candidates(todo.begin(), todo.end());
    std::stable_sort(candidates.begin(), candidates.end(), [&](const VarId& a, const VarId& b) {
      const auto ka = std::make_pair(det_weight(pots, a), combined_size(pots, a));
      const auto kb = std::make_pair(det_weight(pots, b), combined_size(pots, b));
      return ka < kb;
    });

    std::optional<Error> first;
    bool done = false;
    for (const auto& v : candidates) {
      MixedPotential joint = MixedPotential::vacuous();
      std::vector<MixedPotential> rest;
      for (auto& p : pots) {
        if (p.has_var(v))
          joint = combine(joint, p);
        else
          rest.push_back(p);
      }
      try {
        MixedPotential m = marginalize(joint, v);
        if (!trivial(m)) rest.push_back(std::move(m));
        pots = std::move(rest);
        done = true;
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::UnsupportedElimination) throw;
        if (!first) first = Error(e.kind(), (where.empty() ? "" : where + ", ") + "variable " + v + ": " + e.detail());
      }
    }
    if (!done) throw *first;
  }
  return pots;
}

// ---------------------------------------------------------------------------
// Propagation

void check_evidence(const Network& n, const Evidence& e) {
  for (const auto& [v, obs] : e) {
    const Variable& var = n.variable(v);
    if (var.kind == VarKind::Discrete) {
      const auto* s = std::get_if<std::string>(&obs);
      if (!s) raise(ErrorKind::InvalidArgument, "evidence on discrete " + v + " must name a state");
      if (std::find(var.states.begin(), var.states.end(), *s) == var.states.end())
        raise(ErrorKind::UnknownState, "unknown state '" + *s + "' for " + v);
    } else {
      const auto* x = std::get_if<double>(&obs);
      if (!x) raise(ErrorKind::InvalidArgument, "evidence on continuous " + v + " must be a number");
      if (!std::isfinite(*x)) raise(ErrorKind::InvalidPoint, "evidence on " + v + " is not finite");
    }
  }
}

Propagation::Propagation(const JoinTree& tree, Evidence evidence, std::optional<std::size_t> root)
    : tree_(&tree), evidence_(std::move(evidence)), node_findings_(tree.nodes().size()) {
  for (const auto& [v, obs] : evidence_) node_findings_[tree.smallest_node_with({v})][v] = obs;

  const auto& nodes = tree.nodes();
  const std::size_t r = root.value_or(0);
  if (r >= nodes.size()) raise(ErrorKind::InvalidArgument, "root index out of range");

  // Inward pass in post-order, then outward in pre-order.
  std::vector<std::pair<std::size_t, std::size_t>> inward;  // (node, parent)
  std::function<void(std::size_t, std::size_t)> visit = [&](std::size_t i, std::size_t parent) {
    for (std::size_t j : nodes[i].neighbors)
      if (j != parent) visit(j, i);
    if (parent != SIZE_MAX) inward.emplace_back(i, parent);
  };
  visit(r, SIZE_MAX);
  for (const auto& [i, p] : inward) compute(i, p);
  for (auto it = inward.rbegin(); it != inward.rend(); ++it) compute(it->second, it->first);
}

const Bucket& Propagation::message(std::size_t from, std::size_t to) const {
  const auto it = messages_.find({from, to});
  if (it == messages_.end()) raise(ErrorKind::InvalidArgument, "no message between these nodes");
  return it->second;
}

const Bucket& Propagation::compute(std::size_t from, std::size_t to) {
  const auto key = std::make_pair(from, to);
  if (const auto it = messages_.find(key); it != messages_.end()) return it->second;

  const auto& nodes = tree_->nodes();
  Bucket in;
  for (std::size_t p : nodes[from].assigned) in.potentials.push_back(tree_->potentials()[p]);
  in.findings = node_findings_[from];
  for (std::size_t j : nodes[from].neighbors) {
    if (j == to) continue;
    const Bucket& m = compute(j, from);
    in.potentials.insert(in.potentials.end(), m.potentials.begin(), m.potentials.end());
    in.findings.insert(m.findings.begin(), m.findings.end());
  }

  std::vector<VarId> sep;
  std::set_intersection(nodes[from].label.begin(), nodes[from].label.end(), nodes[to].label.begin(),
                        nodes[to].label.end(), std::back_inserter(sep));
  Bucket out;
  for (const auto& [v, obs] : in.findings)
    if (std::binary_search(sep.begin(), sep.end(), v)) out.findings[v] = obs;
  out.potentials =
      eliminate_bucket(std::move(in), sep, "message " + nodes[from].id + " -> " + nodes[to].id);
  return messages_[key] = std::move(out);
}

Bucket Propagation::node_inputs(std::size_t node) const {
  const auto& nodes = tree_->nodes();
  Bucket in;
  for (std::size_t p : nodes[node].assigned) in.potentials.push_back(tree_->potentials()[p]);
  in.findings = node_findings_[node];
  for (std::size_t j : nodes[node].neighbors) {
    const Bucket& m = message(j, node);
    in.potentials.insert(in.potentials.end(), m.potentials.begin(), m.potentials.end());
    in.findings.insert(m.findings.begin(), m.findings.end());
  }
  return in;
}

// ---------------------------------------------------------------------------
// Marginals

namespace {

struct Atom {
  double weight = 1.0;
  std::optional<double> point;
  Product densities;
};

std::vector<Atom> cross(const std::vector<Atom>& a, const std::vector<Atom>& b) {
  std::vector<Atom> out;
  for (const auto& x : a)
    for (const auto& y : b) {
      Atom z;
      z.weight = x.weight * y.weight;
      if (x.point && y.point) {
        if (std::abs(*x.point - *y.point) <= 1e-12 * (1.0 + std::abs(*x.point)))
          raise(ErrorKind::UnsupportedElimination, "product of two point masses at the same value");
        continue;
      }
      z.point = x.point ? x.point : y.point;
      z.densities = x.densities;
      z.densities.insert(z.densities.end(), y.densities.begin(), y.densities.end());
      out.push_back(std::move(z));
    }
  return out;
}

std::vector<Atom> flatten(const Product& factors, const VarId& v) {
  std::vector<Atom> atoms{Atom{}};
  for (const auto& f : factors) {
    switch (f.kind()) {
      case DensityFactor::Kind::Identity:
        break;
      case DensityFactor::Kind::Density:
        for (auto& a : atoms) a.densities.push_back(f);
        break;
      case DensityFactor::Kind::Deterministic: {
        std::vector<Atom> pts;
        for (const auto& eq : f.deterministic().factors()) {
          const auto vars = eq.lhs.vars();
          if (vars.size() != 1 || vars[0] != v)
            raise(ErrorKind::UnsupportedElimination, "equation " + eq.lhs.to_string() + " left in a marginal of " + v);
          const double a = eq.lhs.coeff(v);
          pts.push_back({eq.weight / std::abs(a), -eq.lhs.constant() / a, {}});
        }
        atoms = cross(atoms, pts);
        break;
      }
      case DensityFactor::Kind::Mixture: {
        std::vector<Atom> sum;
        for (const auto& b : f.mixture().branches)
          for (auto& a : flatten(b.factors, v)) {
            a.weight *= b.weight;
            sum.push_back(std::move(a));
          }
        atoms = cross(atoms, sum);
        break;
      }
    }
  }
  return atoms;
}

void add_point(std::vector<std::pair<double, double>>& points, double x, double m) {
  for (auto& [y, w] : points)
    if (std::abs(x - y) <= 1e-12 * (1.0 + std::abs(x))) {
      w += m;
      return;
    }
  points.emplace_back(x, m);
}

}  // namespace

double Marginal::total() const {
  double t = 0.0;
  for (double p : probabilities) t += p;
  for (const auto& pt : points) t += pt.second;
  if (density) t += definite_integral(*density);
  return t;
}

Marginal materialize(const MixedPotential& p, const VarId& v) {
  Marginal m;
  m.var = v;
  for (const auto& d : p.domain())
    if (d != v) raise(ErrorKind::InvalidArgument, "marginal of " + v + " still mentions " + d);

  const int idx = p.discrete_index(v);
  if (idx >= 0) {
    m.discrete = true;
    m.states = p.discrete_vars()[idx].states;
    m.probabilities.assign(m.states.size(), 0.0);
    for (const auto& [cfg, e] : p.table()) {
      const auto [s, rest] = normalize_product(e.factors);
      if (!rest.empty()) raise(ErrorKind::InvalidArgument, "discrete marginal has a density part");
      m.probabilities[cfg[idx]] += e.mass() * s;
    }
    return m;
  }
  if (!p.has_var(v)) raise(ErrorKind::InvalidArgument, v + " is not in the potential");

  std::vector<std::pair<double, PiecewiseFn>> parts;
  for (const auto& [cfg, e] : p.table()) {
    const auto [s, rest] = normalize_product(e.factors);
    const double w = e.mass() * s;
    if (w == 0.0) continue;
    for (const auto& a : flatten(rest, v)) {
      if (a.point) {
        const double val = a.densities.empty() ? 1.0 : evaluate_product(a.densities, {{v, *a.point}});
        if (a.weight * w * val != 0.0) add_point(m.points, *a.point, a.weight * w * val);
      } else {
        if (a.densities.empty())
          raise(ErrorKind::DegenerateDensity, "the marginal of " + v + " has no density factor");
        parts.emplace_back(a.weight * w, materialize_product(a.densities));
      }
    }
  }
  std::sort(m.points.begin(), m.points.end());
  if (!parts.empty()) m.density = weighted_sum(parts);
  return m;
}

namespace {

Marginal marginal_from_bucket(Bucket in, const VarId& v, const std::string& where) {
  const auto fit = in.findings.find(v);
  std::optional<Observation> observed;
  if (fit != in.findings.end()) observed = fit->second;
  auto pots = eliminate_bucket(std::move(in), observed ? std::vector<VarId>{} : std::vector<VarId>{v}, where);

  MixedPotential joint = MixedPotential::vacuous();
  for (const auto& p : pots) joint = combine(joint, p);

  if (!observed) {
    if (!joint.has_var(v)) raise(ErrorKind::InvalidArgument, v + " does not appear at " + where);
    return materialize(joint, v);
  }
  // An observed variable: all the weight sits on the observed value.
  double w = 0.0;
  for (const auto& [cfg, e] : joint.table()) w += e.mass() * normalize_product(e.factors).first;
  Marginal m;
  m.var = v;
  if (const auto* s = std::get_if<std::string>(&*observed)) {
    m.discrete = true;
    m.states = {*s};
    m.probabilities = {w};
  } else {
    m.points = {{std::get<double>(*observed), w}};
  }
  return m;
}

}  // namespace

Marginal query_marginal(const Propagation& state, const VarId& v) {
  const std::size_t node = state.tree().smallest_node_with({v});
  Marginal m = marginal_from_bucket(state.node_inputs(node), v, "node " + state.tree().nodes()[node].id);
  if (m.discrete && m.states.size() == 1 && state.evidence().count(v)) {
    // Report every state of an observed discrete variable.
    for (const auto& p : state.tree().potentials()) {
      const int idx = p.discrete_index(v);
      if (idx < 0) continue;
      const auto& all = p.discrete_vars()[idx].states;
      std::vector<double> probs(all.size(), 0.0);
      probs[std::find(all.begin(), all.end(), m.states[0]) - all.begin()] = m.probabilities[0];
      m.states = all;
      m.probabilities = probs;
      break;
    }
  }
  return m;
}

Marginal brute_force_marginal(const Network& n, const Evidence& evidence, const VarId& v) {
  check_evidence(n, evidence);
  Bucket all;
  all.potentials = compile_potentials(n);
  all.findings = evidence;
  Marginal m = marginal_from_bucket(std::move(all), v, "joint");
  if (m.discrete && evidence.count(v)) {
    const auto& states = n.variable(v).states;
    std::vector<double> probs(states.size(), 0.0);
    probs[std::find(states.begin(), states.end(), m.states[0]) - states.begin()] = m.probabilities[0];
    m.states = states;
    m.probabilities = probs;
  }
  return m;
}

std::pair<Marginal, double> normalize_marginal(const Marginal& m) {
  const double w = m.total();
  if (!(w > 0.0) || !std::isfinite(w))
    raise(ErrorKind::InconsistentEvidence, "the evidence has zero probability (marginal of " + m.var + ")");
  Marginal out = m;
  for (double& p : out.probabilities) p /= w;
  for (auto& pt : out.points) pt.second /= w;
  if (out.density) out.density = scale(*out.density, 1.0 / w);
  return {out, w};
}

Moments posterior_moments(const Marginal& m) {
  double e1 = 0.0, e2 = 0.0;
  if (m.discrete) {
    // Moments of the state index.
    for (std::size_t s = 0; s < m.probabilities.size(); ++s) {
      e1 += s * m.probabilities[s];
      e2 += double(s * s) * m.probabilities[s];
    }
    return {e1, std::max(0.0, e2 - e1 * e1)};
  }
  for (const auto& [x, w] : m.points) {
    e1 += x * w;
    e2 += x * x * w;
  }
  if (m.density) {
    const double md = definite_integral(*m.density);
    if (md != 0.0) {
      e1 += md * moment(*m.density, m.var, 1);
      e2 += md * moment(*m.density, m.var, 2);
    } else if (m.points.empty()) {
      raise(ErrorKind::DegenerateDensity, "the marginal of " + m.var + " has zero mass");
    }
  }
  return {e1, std::max(0.0, e2 - e1 * e1)};
}

Moments posterior_moments(const Propagation& state, const VarId& v) {
  return posterior_moments(normalize_marginal(query_marginal(state, v)).first);
}

}  // namespace hmte
