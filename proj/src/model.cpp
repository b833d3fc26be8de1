// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "hmte/error.hpp"
#include "hmte/limits.hpp"

namespace hmte {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Expression language

namespace {

class ExprParser {
 public:
  explicit ExprParser(std::string_view s) : s_(s) {}

  LinExpr expression() {
    LinExpr acc = term();
    for (;;) {
      skip();
      if (peek() == '+') {
        ++pos_;
        acc += term();
      } else if (peek() == '-') {
        ++pos_;
        acc -= term();
      } else {
        return acc;
      }
    }
  }

  bool at_end() {
    skip();
    return pos_ >= s_.size();
  }
  std::size_t pos() const { return pos_; }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void advance(std::size_t n) { pos_ += n; }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    raise(ErrorKind::ParseError, "column " + std::to_string(pos_ + 1) + ": " + what + " in '" +
                                     std::string(s_) + "'");
  }

 private:
  LinExpr term() {
    skip();
    if (peek() == '+') {
      ++pos_;
      return term();
    }
    if (peek() == '-') {
      ++pos_;
      return -term();
    }
    LinExpr acc = factor();
    for (;;) {
      skip();
      const char c = peek();
      if (c == '*' || c == '/') {
        const std::size_t at = pos_;
        ++pos_;
        skip();
        LinExpr rhs;
        if (peek() == '-' || peek() == '+') {
          const bool neg = peek() == '-';
          ++pos_;
          rhs = factor();
          if (neg) rhs = -rhs;
        } else {
          rhs = factor();
        }
        if (c == '*') {
          if (!acc.is_constant() && !rhs.is_constant()) nonlinear(at, "product of variables");
          acc = acc.is_constant() ? rhs * acc.constant() : acc * rhs.constant();
        } else {
          if (!rhs.is_constant()) nonlinear(at, "division by a variable");
          if (rhs.constant() == 0.0) fail("division by zero");
          acc *= 1.0 / rhs.constant();
        }
      } else if (c == '^') {
        nonlinear(pos_, "power");
      } else {
        return acc;
      }
    }
  }

  LinExpr factor() {
    skip();
    const char c = peek();
    if (c == '(') {
      ++pos_;
      LinExpr e = expression();
      skip();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      if (!std::isfinite(v)) fail("number out of range");
      return LinExpr(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      skip();
      if (peek() == '(') nonlinear(start, "function call " + name);
      return LinExpr::variable(name);
    }
    if (c == '\0') fail("unexpected end of expression");
    fail(std::string("unexpected '") + c + "'");
  }

  [[noreturn]] void nonlinear(std::size_t at, const std::string& what) const {
    raise(ErrorKind::NonlinearExpression,
          "column " + std::to_string(at + 1) + ": " + what + " in '" + std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

LinExpr parse_linexpr(std::string_view text) {
  ExprParser p(text);
  if (p.at_end()) p.fail("empty expression");
  LinExpr e = p.expression();
  if (!p.at_end()) p.fail(std::string("unexpected '") + p.peek() + "'");
  return e;
}

LinExpr parse_equation(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || text.find('=', eq + 1) != std::string_view::npos)
    raise(ErrorKind::ParseError, "expected exactly one '=' in '" + std::string(text) + "'");
  return parse_linexpr(text.substr(0, eq)) - parse_linexpr(text.substr(eq + 1));
}

std::vector<Constraint> parse_inequalities(std::string_view text) {
  std::vector<std::string_view> parts;
  std::vector<std::string> ops;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '<' && c != '>') continue;
    parts.push_back(text.substr(start, i - start));
    const bool eq = i + 1 < text.size() && text[i + 1] == '=';
    ops.push_back(std::string(1, c) + (eq ? "=" : ""));
    i += eq ? 1 : 0;
    start = i + 1;
  }
  parts.push_back(text.substr(start));
  if (ops.empty())
    raise(ErrorKind::ParseError, "expected an inequality in '" + std::string(text) + "'");
  std::vector<Constraint> out;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const LinExpr a = parse_linexpr(parts[k]), b = parse_linexpr(parts[k + 1]);
    const bool le = ops[k][0] == '<';
    const bool strict = ops[k].size() == 1;
    out.push_back({le ? b - a : a - b, strict});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network queries

const Variable& Network::variable(const VarId& v) const {
  for (const auto& x : variables)
    if (x.name == v) return x;
  raise(ErrorKind::UnknownVariable, "unknown variable " + v);
}

bool Network::has_variable(const VarId& v) const {
  return std::any_of(variables.begin(), variables.end(), [&](const Variable& x) { return x.name == v; });
}

bool Network::is_discrete(const VarId& v) const { return variable(v).kind == VarKind::Discrete; }

std::vector<VarId> Network::discrete_parents(const VarId& v) const {
  std::vector<VarId> out;
  for (const auto& p : variable(v).parents)
    if (is_discrete(p)) out.push_back(p);
  return out;
}

std::vector<VarId> Network::continuous_parents(const VarId& v) const {
  std::vector<VarId> out;
  for (const auto& p : variable(v).parents)
    if (!is_discrete(p)) out.push_back(p);
  return out;
}

Configuration parse_configuration(const Network& n, const std::vector<VarId>& parents,
                                  std::string_view text) {
  std::map<VarId, std::string> given;
  std::string s(text);
  std::stringstream ss(s);
  std::string item;
  auto trim = [](std::string x) {
    const auto b = x.find_first_not_of(" \t");
    const auto e = x.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
  };
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      raise(ErrorKind::ParseError, "expected NAME=STATE in configuration '" + s + "'");
    given[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  Configuration c;
  for (const auto& p : parents) {
    const auto it = given.find(p);
    if (it == given.end())
      raise(ErrorKind::ParseError, "configuration '" + s + "' does not set " + p);
    const auto& st = n.variable(p).states;
    const auto k = std::find(st.begin(), st.end(), it->second);
    if (k == st.end()) raise(ErrorKind::UnknownState, "unknown state '" + it->second + "' for " + p);
    c.push_back(static_cast<int>(k - st.begin()));
    given.erase(it);
  }
  if (!given.empty())
    raise(ErrorKind::ParseError, "configuration '" + s + "' names " + given.begin()->first +
                                     " which is not a discrete parent");
  return c;
}

std::string format_configuration(const Network& n, const std::vector<VarId>& parents,
                                 const Configuration& c) {
  std::string out;
  for (std::size_t i = 0; i < parents.size() && i < c.size(); ++i) {
    if (i) out += ",";
    out += parents[i] + "=" + n.variable(parents[i]).states.at(c[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normal template

namespace {

constexpr double kA0 = -0.0105929;
constexpr double kA[3] = {197.5892111, -462.6885096, 265.5099139};
constexpr double kB[3] = {2.2568434, 2.3434117, 2.4043270};

}  // namespace

PiecewiseFn make_normal_mte(const VarId& z, const LinExpr& mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance))
    raise(ErrorKind::InvalidArgument, "variance must be positive");
  if (mean.has(z)) raise(ErrorKind::InvalidArgument, "mean of " + z + " mentions " + z);
  const double sd = std::sqrt(variance);
  const LinExpr d = LinExpr::variable(z) - mean;
  std::vector<VarId> vars = mean.vars();
  vars.push_back(z);
  std::sort(vars.begin(), vars.end());

  std::vector<Piece> pieces;
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    std::vector<ExpPolyTerm> terms{{kA0 / sd, {}, LinExpr()}};
    for (int i = 0; i < 3; ++i) terms.push_back({kA[i] / sd, {}, d * (sign * kB[i] / sd)});
    std::vector<Constraint> cs =
        side == 0 ? std::vector<Constraint>{{d + LinExpr(3 * sd), false}, {-d, true}}
                  : std::vector<Constraint>{{d, false}, {LinExpr(3 * sd) - d, false}};
    auto r = Region::make(vars, cs);
    if (!r) raise(ErrorKind::InvalidArgument, "degenerate normal support");
    pieces.push_back({*r, std::move(terms)});
  }
  return PiecewiseFn(vars, std::move(pieces));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail_at(const std::string& where, const std::string& what) {
  raise(ErrorKind::ParseError, where + ": " + what);
}

// Re-raises expression errors with the location in the model file.
template <class F>
auto in_context(const std::string& where, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    raise(e.kind(), where + ": " + e.detail());
  }
}

void check_known(const Network& n, const LinExpr& e, const std::string& where) {
  for (const auto& v : e.vars())
    if (!n.has_variable(v)) raise(ErrorKind::UnknownVariable, where + ": unknown variable " + v);
}

const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail_at(where, std::string("missing '") + key + "'");
  return obj.at(key);
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) fail_at(where, "expected a string");
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail_at(where, "expected a number");
  return j.get<double>();
}

PiecewiseFn parse_pieces(const Network& n, const Cpd& cpd, const json& spec, const std::string& where) {
  std::vector<VarId> vars = n.continuous_parents(cpd.var);
  vars.push_back(cpd.var);
  std::sort(vars.begin(), vars.end());
  const json& ps = member(spec, "pieces", where);
  if (!ps.is_array()) fail_at(where, "'pieces' must be a list");
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string pw = where + ".pieces[" + std::to_string(i) + "]";
    std::vector<Constraint> cs;
    const json& rg = member(ps[i], "region", pw);
    if (!rg.is_array()) fail_at(pw, "'region' must be a list of inequalities");
    for (const auto& r : rg) {
      auto parsed = in_context(pw + ".region", [&] { return parse_inequalities(as_string(r, pw)); });
      for (auto& c : parsed) {
        check_known(n, c.expr, pw);
        cs.push_back(std::move(c));
      }
    }
    std::vector<ExpPolyTerm> terms;
    const json& ts = member(ps[i], "terms", pw);
    if (!ts.is_array()) fail_at(pw, "'terms' must be a list");
    for (const auto& t : ts) {
      ExpPolyTerm term;
      term.coeff = as_number(member(t, "coeff", pw), pw + ".coeff");
      if (t.contains("exp")) {
        term.exp_arg = in_context(pw + ".exp", [&] { return parse_linexpr(as_string(t.at("exp"), pw)); });
        check_known(n, term.exp_arg, pw);
      }
      if (t.contains("powers")) {
        if (!t.at("powers").is_object()) fail_at(pw, "'powers' must map names to exponents");
        for (const auto& [v, k] : t.at("powers").items()) {
          if (!n.has_variable(v)) raise(ErrorKind::UnknownVariable, pw + ": unknown variable " + v);
          if (!k.is_number_integer() || k.get<int>() < 0) fail_at(pw, "exponents must be non-negative integers");
          if (k.get<int>() > 0) term.powers[v] = k.get<int>();
        }
      }
      terms.push_back(std::move(term));
    }
    auto region = Region::make(vars, cs);
    if (!region) fail_at(pw, "region has an empty interior");
    pieces.push_back({*region, std::move(terms)});
  }
  return in_context(where, [&] { return PiecewiseFn(vars, std::move(pieces)); });
}

DensitySpec parse_density_spec(const Network& n, const Cpd& cpd, const json& spec,
                               const std::string& where) {
  if (spec.is_object() && spec.contains("template")) {
    const std::string t = as_string(spec.at("template"), where + ".template");
    if (t != "normal_mte") fail_at(where, "unknown template '" + t + "'");
    NormalSpec ns;
    const json& m = member(spec, "mean", where);
    if (m.is_number())
      ns.mean = LinExpr(m.get<double>());
    else
      ns.mean = in_context(where + ".mean", [&] { return parse_linexpr(as_string(m, where)); });
    check_known(n, ns.mean, where);
    ns.variance = as_number(member(spec, "variance", where), where + ".variance");
    if (!(ns.variance > 0.0)) fail_at(where, "variance must be positive");
    return ns;
  }
  return parse_pieces(n, cpd, spec, where);
}

bool is_single_density(const json& j) {
  return j.is_object() && (j.contains("template") || j.contains("pieces"));
}

Variable parse_variable(const json& j, std::size_t i) {
  const std::string where = "variables[" + std::to_string(i) + "]";
  Variable v;
  v.name = as_string(member(j, "name", where), where + ".name");
  const std::string kind = as_string(member(j, "kind", where), where + ".kind");
  if (kind == "discrete")
    v.kind = VarKind::Discrete;
  else if (kind == "continuous")
    v.kind = VarKind::Continuous;
  else if (kind == "deterministic")
    v.kind = VarKind::Deterministic;
  else
    fail_at(where, "unknown kind '" + kind + "'");
  if (j.contains("states")) {
    if (!j.at("states").is_array()) fail_at(where, "'states' must be a list");
    for (const auto& s : j.at("states"))
      v.states.push_back(s.is_string() ? s.get<std::string>() : s.dump());
  }
  if (v.kind == VarKind::Discrete) {
    if (v.states.empty()) fail_at(where, "discrete variable " + v.name + " needs states");
    auto sorted = v.states;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      fail_at(where, "duplicate state in " + v.name);
  } else if (!v.states.empty()) {
    fail_at(where, "continuous variable " + v.name + " cannot list states");
  }
  if (j.contains("parents")) {
    if (!j.at("parents").is_array()) fail_at(where, "'parents' must be a list");
    for (const auto& p : j.at("parents")) v.parents.push_back(as_string(p, where + ".parents"));
  }
  return v;
}

// Calls fn(configuration, value) for either a single value or a map keyed by
// configuration strings.
void for_each_config(const Network& n, const VarId& var, const json& j, bool single,
                     const std::string& where,
                     const std::function<void(const Configuration&, const json&, const std::string&)>& fn) {
  if (single) {
    fn(Configuration{}, j, where);
    return;
  }
  if (!j.is_object()) fail_at(where, "expected an object keyed by parent configuration");
  const auto parents = n.discrete_parents(var);
  for (const auto& [key, value] : j.items()) {
    const std::string w = where + "[\"" + key + "\"]";
    const Configuration c = in_context(w, [&] { return parse_configuration(n, parents, key); });
    fn(c, value, w);
  }
}

std::size_t line_col_offset(std::string_view text, std::size_t byte, std::size_t* col) {
  std::size_t line = 1, c = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      c = 1;
    } else {
      ++c;
    }
  }
  *col = c;
  return line;
}

}  // namespace

Network parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t col = 0;
    const std::size_t line = line_col_offset(text, e.byte, &col);
    std::string msg = e.what();
    const auto cut = msg.find("parse error");
    if (cut != std::string::npos) msg = msg.substr(cut);
    raise(ErrorKind::ParseError,
          "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
  if (!doc.is_object()) fail_at("model", "top level must be an object");

  Network n;
  const json& vars = member(doc, "variables", "model");
  if (!vars.is_array()) fail_at("variables", "expected a list");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    Variable v = parse_variable(vars[i], i);
    if (n.has_variable(v.name)) fail_at("variables", "duplicate variable " + v.name);
    n.variables.push_back(std::move(v));
  }
  for (const auto& v : n.variables)
    for (const auto& p : v.parents)
      if (!n.has_variable(p))
        raise(ErrorKind::UnknownVariable, "variables: parent " + p + " of " + v.name + " is not declared");

  const json& cpds = member(doc, "cpds", "model");
  if (!cpds.is_array()) fail_at("cpds", "expected a list");
  for (std::size_t i = 0; i < cpds.size(); ++i) {
    const std::string where = "cpds[" + std::to_string(i) + "]";
    Cpd cpd;
    cpd.var = as_string(member(cpds[i], "var", where), where + ".var");
    if (!n.has_variable(cpd.var))
      raise(ErrorKind::UnknownVariable, where + ": unknown variable " + cpd.var);
    if (n.cpds.count(cpd.var)) fail_at(where, "second conditional for " + cpd.var);
    const Variable& v = n.variable(cpd.var);
    const auto& c = cpds[i];
    const int given = int(c.contains("table")) + int(c.contains("density")) + int(c.contains("equations"));
    if (given != 1) fail_at(where, "expected exactly one of 'table', 'density', 'equations'");

    if (c.contains("table")) {
      if (v.kind != VarKind::Discrete) fail_at(where, cpd.var + " is not discrete but has a table");
      cpd.kind = Cpd::Kind::Table;
      const json& t = c.at("table");
      for_each_config(n, cpd.var, t, t.is_array(), where + ".table",
                      [&](const Configuration& cfg, const json& row, const std::string& w) {
                        if (!row.is_array()) fail_at(w, "expected a list of probabilities");
                        std::vector<double> ps;
                        for (const auto& x : row) ps.push_back(as_number(x, w));
                        cpd.table[cfg] = std::move(ps);
                      });
    } else if (c.contains("density")) {
      if (v.kind != VarKind::Continuous) fail_at(where, cpd.var + " is not continuous but has a density");
      cpd.kind = Cpd::Kind::Density;
      const json& d = c.at("density");
      for_each_config(n, cpd.var, d, is_single_density(d), where + ".density",
                      [&](const Configuration& cfg, const json& spec, const std::string& w) {
                        cpd.density.emplace(cfg, parse_density_spec(n, cpd, spec, w));
                      });
    } else {
      if (v.kind != VarKind::Deterministic)
        fail_at(where, cpd.var + " is not deterministic but has equations");
      cpd.kind = Cpd::Kind::Equation;
      const json& e = c.at("equations");
      for_each_config(n, cpd.var, e, e.is_string(), where + ".equations",
                      [&](const Configuration& cfg, const json& s, const std::string& w) {
                        LinExpr g = in_context(w, [&] { return parse_equation(as_string(s, w)); });
                        check_known(n, g, w);
                        cpd.equations[cfg] = std::move(g);
                      });
    }
    n.cpds[cpd.var] = std::move(cpd);
  }
  for (const auto& v : n.variables)
    if (!n.cpds.count(v.name)) fail_at("cpds", "no conditional for " + v.name);

  if (doc.contains("jointree")) {
    const json& jt = doc.at("jointree");
    if (!jt.is_array()) fail_at("jointree", "expected a list of nodes");
    std::vector<JoinTreeNodeSpec> nodes;
    for (std::size_t i = 0; i < jt.size(); ++i) {
      const std::string where = "jointree[" + std::to_string(i) + "]";
      JoinTreeNodeSpec node;
      const json& id = member(jt[i], "id", where);
      node.id = id.is_string() ? id.get<std::string>() : id.dump();
      for (const auto& x : member(jt[i], "variables", where)) {
        node.variables.push_back(as_string(x, where));
        if (!n.has_variable(node.variables.back()))
          raise(ErrorKind::UnknownVariable, where + ": unknown variable " + node.variables.back());
      }
      if (jt[i].contains("neighbors"))
        for (const auto& x : jt[i].at("neighbors"))
          node.neighbors.push_back(x.is_string() ? x.get<std::string>() : x.dump());
      if (jt[i].contains("assigned"))
        for (const auto& x : jt[i].at("assigned")) node.assigned.push_back(as_string(x, where));
      nodes.push_back(std::move(node));
    }
    n.jointree = std::move(nodes);
  }
  return n;
}

Network load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::ParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

json density_json(const DensitySpec& spec) {
  if (const auto* ns = std::get_if<NormalSpec>(&spec)) {
    json j;
    j["template"] = "normal_mte";
    j["mean"] = ns->mean.to_string();
    j["variance"] = ns->variance;
    return j;
  }
  const auto& f = std::get<PiecewiseFn>(spec);
  json pieces = json::array();
  for (const auto& p : f.pieces()) {
    json region = json::array();
    for (const auto& c : p.region.constraints())
      region.push_back(c.expr.to_string() + (c.strict ? " > 0" : " >= 0"));
    json terms = json::array();
    for (const auto& t : p.terms) {
      json jt;
      jt["coeff"] = t.coeff;
      if (!t.powers.empty()) jt["powers"] = t.powers;
      if (!(t.exp_arg.is_constant() && t.exp_arg.constant() == 0.0)) jt["exp"] = t.exp_arg.to_string();
      terms.push_back(jt);
    }
    pieces.push_back({{"region", region}, {"terms", terms}});
  }
  return {{"pieces", pieces}};
}

std::string equation_string(const VarId& head, const LinExpr& g) {
  if (g.coeff(head) == 1.0) {
    const LinExpr rhs = LinExpr::variable(head) - g;
    return head + " = " + rhs.to_string();
  }
  return g.to_string() + " = 0";
}

}  // namespace

std::string serialize_model(const Network& n) {
  json doc;
  json vars = json::array();
  for (const auto& v : n.variables) {
    json j;
    j["name"] = v.name;
    j["kind"] = v.kind == VarKind::Discrete ? "discrete" : v.kind == VarKind::Continuous ? "continuous" : "deterministic";
    if (v.kind == VarKind::Discrete) j["states"] = v.states;
    if (!v.parents.empty()) j["parents"] = v.parents;
    vars.push_back(j);
  }
  doc["variables"] = vars;

  json cpds = json::array();
  for (const auto& v : n.variables) {
    const Cpd& c = n.cpds.at(v.name);
    const auto parents = n.discrete_parents(v.name);
    json j;
    j["var"] = c.var;
    auto keyed = [&](const auto& m, auto conv) {
      if (m.size() == 1 && m.begin()->first.empty()) return conv(m.begin()->second);
      json obj = json::object();
      for (const auto& [cfg, x] : m) obj[format_configuration(n, parents, cfg)] = conv(x);
      return obj;
    };
    switch (c.kind) {
      case Cpd::Kind::Table:
        j["table"] = keyed(c.table, [](const std::vector<double>& r) { return json(r); });
        break;
      case Cpd::Kind::Density:
        j["density"] = keyed(c.density, [](const DensitySpec& s) { return density_json(s); });
        break;
      case Cpd::Kind::Equation:
        j["equations"] = keyed(c.equations, [&](const LinExpr& g) { return json(equation_string(c.var, g)); });
        break;
    }
    cpds.push_back(j);
  }
  doc["cpds"] = cpds;

  if (n.jointree) {
    json jt = json::array();
    for (const auto& node : *n.jointree)
      jt.push_back({{"id", node.id},
                    {"variables", node.variables},
                    {"neighbors", node.neighbors},
                    {"assigned", node.assigned}});
    doc["jointree"] = jt;
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::vector<Configuration> all_configurations(const Network& n, const std::vector<VarId>& vars) {
  std::vector<Configuration> out{{}};
  for (const auto& v : vars) {
    std::vector<Configuration> next;
    const int k = static_cast<int>(n.variable(v).states.size());
    for (const auto& c : out)
      for (int s = 0; s < k; ++s) {
        auto d = c;
        d.push_back(s);
        next.push_back(d);
      }
    out = std::move(next);
  }
  return out;
}

template <class Map>
std::vector<std::string> coverage(const Network& n, const VarId& var, const Map& m, const char* what) {
  std::vector<std::string> out;
  if (m.size() == 1 && m.begin()->first.empty()) return out;
  const auto parents = n.discrete_parents(var);
  for (const auto& c : all_configurations(n, parents))
    if (!m.count(c))
      out.push_back(var + ": no " + what + " for " + format_configuration(n, parents, c));
  return out;
}

// Integral over the child of a density at the parent values found in the
// interior of each of its pieces.
std::vector<std::string> check_density(const Network& n, const VarId& var, const PiecewiseFn& f,
                                       const std::string& label) {
  std::vector<std::string> out;
  const auto parents = n.continuous_parents(var);
  for (const auto& v : f.vars())
    if (v != var && std::find(parents.begin(), parents.end(), v) == parents.end())
      out.push_back(var + label + ": density mentions " + v + " which is not a continuous parent");
  if (!out.empty()) return out;
  std::vector<Point> probes;
  if (parents.empty())
    probes.push_back({});
  for (const auto& p : f.pieces()) {
    if (parents.empty()) break;
    Point x;
    for (const auto& v : parents) {
      const auto it = p.region.interior_point().find(v);
      x[v] = it == p.region.interior_point().end() ? 0.0 : it->second;
    }
    probes.push_back(x);
  }
  for (const auto& x : probes) {
    try {
      PiecewiseFn g = f;
      for (const auto& [v, val] : x) g = substitute_linear(g, v, LinExpr(val));
      const double m = definite_integral(g);
      if (std::abs(m - 1.0) > 1e-3) {
        std::ostringstream os;
        os << var << label << ": density integrates to " << m << " instead of 1";
        out.push_back(os.str());
        break;
      }
    } catch (const Error& e) {
      out.push_back(var + label + ": " + e.detail());
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> validate_model(const Network& n) {
  std::vector<std::string> diags;
  auto add = [&](std::vector<std::string> more) { diags.insert(diags.end(), more.begin(), more.end()); };

  // Cycles, by depth-first search over parent links.
  std::map<VarId, int> state;
  std::function<bool(const VarId&)> visit = [&](const VarId& v) {
    if (state[v] == 1) return true;
    if (state[v] == 2) return false;
    state[v] = 1;
    for (const auto& p : n.variable(v).parents)
      if (visit(p)) return true;
    state[v] = 2;
    return false;
  };
  for (const auto& v : n.variables) {
    if (state[v.name] == 0 && visit(v.name)) {
      diags.push_back("the parent graph has a cycle through " + v.name);
      break;
    }
  }

  for (const auto& v : n.variables) {
    const auto cont = n.continuous_parents(v.name);
    if (v.kind == VarKind::Discrete && !cont.empty())
      diags.push_back(v.name + ": discrete variables with continuous parents are not supported");
    if (v.kind == VarKind::Deterministic && cont.empty())
      diags.push_back(v.name + ": a deterministic variable needs at least one continuous parent");
    std::set<VarId> seen;
    for (const auto& p : v.parents) {
      if (p == v.name) diags.push_back(v.name + ": is its own parent");
      if (!seen.insert(p).second) diags.push_back(v.name + ": parent " + p + " listed twice");
    }

    const Cpd& c = n.cpds.at(v.name);
    const auto dparents = n.discrete_parents(v.name);
    switch (c.kind) {
      case Cpd::Kind::Table: {
        if (c.table.size() == 1 && c.table.begin()->first.empty() && !dparents.empty()) {
          diags.push_back(v.name + ": table needs one row per parent configuration");
          break;
        }
        add(coverage(n, v.name, c.table, "table row"));
        for (const auto& [cfg, row] : c.table) {
          const std::string at = dparents.empty() ? "" : " (" + format_configuration(n, dparents, cfg) + ")";
          if (row.size() != v.states.size()) {
            diags.push_back(v.name + at + ": row has " + std::to_string(row.size()) + " entries for " +
                            std::to_string(v.states.size()) + " states");
            continue;
          }
          double s = 0.0;
          bool negative = false;
          for (double p : row) {
            s += p;
            negative = negative || p < 0.0;
          }
          if (negative) diags.push_back(v.name + at + ": negative probability");
          if (std::abs(s - 1.0) > 1e-9) {
            std::ostringstream os;
            os.precision(12);
            os << v.name << at << ": probabilities sum to " << s << " instead of 1";
            diags.push_back(os.str());
          }
        }
        break;
      }
      case Cpd::Kind::Density: {
        add(coverage(n, v.name, c.density, "density"));
        for (const auto& [cfg, spec] : c.density) {
          const std::string at = cfg.empty() ? "" : " (" + format_configuration(n, dparents, cfg) + ")";
          if (const auto* ns = std::get_if<NormalSpec>(&spec)) {
            for (const auto& m : ns->mean.vars())
              if (std::find(cont.begin(), cont.end(), m) == cont.end())
                diags.push_back(v.name + at + ": mean mentions " + m + " which is not a continuous parent");
            if (ns->mean.has(v.name)) diags.push_back(v.name + at + ": mean mentions the variable itself");
          } else {
            add(check_density(n, v.name, std::get<PiecewiseFn>(spec), at));
          }
        }
        break;
      }
      case Cpd::Kind::Equation: {
        add(coverage(n, v.name, c.equations, "equation"));
        for (const auto& [cfg, g] : c.equations) {
          const std::string at = cfg.empty() ? "" : " (" + format_configuration(n, dparents, cfg) + ")";
          if (std::abs(g.coeff(v.name) - 1.0) > 1e-12) {
            std::ostringstream os;
            os << v.name << at << ": coefficient on " << v.name << " is " << static_cast<double>(g.coeff(v.name))
               << ", expected 1 (write it as " << v.name << " = ...)";
            diags.push_back(os.str());
          }
          for (const auto& m : g.vars())
            if (m != v.name && std::find(cont.begin(), cont.end(), m) == cont.end())
              diags.push_back(v.name + at + ": equation mentions " + m + " which is not a continuous parent");
        }
        break;
      }
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Compilation

MixedPotential compile_potential(const Network& n, const VarId& var) {
  const Variable& v = n.variable(var);
  const Cpd& c = n.cpds.at(var);
  const auto dparents = n.discrete_parents(var);
  const auto cparents = n.continuous_parents(var);

  std::vector<DiscreteVariable> dvars;
  for (const auto& p : dparents) dvars.push_back({p, n.variable(p).states});
  std::vector<VarId> cvars = cparents;

  std::map<Configuration, PotentialEntry> table;
  const auto configs = all_configurations(n, dparents);
  if (c.kind == Cpd::Kind::Table) {
    dvars.push_back({var, v.states});
    for (const auto& cfg : configs) {
      const auto& row = c.table.at(cfg);
      for (std::size_t s = 0; s < row.size(); ++s) {
        if (row[s] == 0.0) continue;
        Configuration full = cfg;
        full.push_back(static_cast<int>(s));
        table[full] = {{row[s]}, {}};
      }
    }
    return MixedPotential(std::move(dvars), std::move(cvars), std::move(table));
  }

  cvars.push_back(var);
  std::map<Configuration, DensityFactor> made;
  auto factor_for = [&](const Configuration& cfg) {
    const Configuration key = c.kind == Cpd::Kind::Density ? (c.density.count(cfg) ? cfg : Configuration{})
                                                           : (c.equations.count(cfg) ? cfg : Configuration{});
    auto it = made.find(key);
    if (it != made.end()) return it->second;
    DensityFactor f;
    if (c.kind == Cpd::Kind::Density) {
      const auto& spec = c.density.at(key);
      if (const auto* ns = std::get_if<NormalSpec>(&spec))
        f = DensityFactor(make_normal_mte(var, ns->mean, ns->variance));
      else
        f = DensityFactor(std::get<PiecewiseFn>(spec));
    } else {
      f = DensityFactor(DeterministicPotential({{1.0, c.equations.at(key)}}, var));
    }
    made.emplace(key, f);
    return f;
  };
  for (const auto& cfg : configs) table[cfg] = {{}, {factor_for(cfg)}};
  return MixedPotential(std::move(dvars), std::move(cvars), std::move(table));
}

std::vector<MixedPotential> compile_potentials(const Network& n) {
  std::vector<MixedPotential> out;
  for (const auto& v : n.variables) out.push_back(compile_potential(n, v.name));
  return out;
}

}  // namespace hmte
