// Apache License, Version 2.0, refer to LICENSE.txt

// hmte: validate models, query posterior marginals and write plot data.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hmte/error.hpp"
#include "hmte/jointree.hpp"
#include "hmte/limits.hpp"
#include "hmte/model.hpp"

namespace {

using namespace hmte;
using ojson = nlohmann::ordered_json;

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kInference = 3 };

int fail(int code, const std::string& reason) {
  std::string line = reason;
  for (auto& c : line)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error: " << line << "\n";
  return code;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

Evidence parse_evidence(const Network& n, const std::vector<std::string>& items) {
  Evidence ev;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      raise(ErrorKind::ParseError, "evidence '" + item + "' is not of the form Var=value");
    const std::string name = item.substr(0, eq), value = item.substr(eq + 1);
    const Variable& v = n.variable(name);
    if (v.kind == VarKind::Discrete) {
      ev[name] = value;
      continue;
    }
    char* end = nullptr;
    const double x = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || !std::isfinite(x))
      raise(ErrorKind::ParseError, "evidence value '" + value + "' for " + name + " is not a decimal number");
    ev[name] = x;
  }
  check_evidence(n, ev);
  return ev;
}

// Loads and validates; diagnostics and parse errors are input failures.
std::optional<Network> load_checked(const std::string& path, int& code) {
  try {
    Network n = load_model(path);
    const auto diags = validate_model(n);
    if (!diags.empty()) {
      code = fail(kInput, "ValidationError: " + diags.front());
      return std::nullopt;
    }
    return n;
  } catch (const Error& e) {
    code = fail(kInput, e.what());
    return std::nullopt;
  }
}

int run_validate(const std::string& path) {
  Network n;
  try {
    n = load_model(path);
  } catch (const Error& e) {
    return fail(kInput, e.what());
  }
  const auto diags = validate_model(n);
  for (const auto& d : diags) std::cout << d << "\n";
  if (!diags.empty()) return fail(kInput, "ValidationError: " + std::to_string(diags.size()) + " problem(s) in " + path);
  std::cout << "ok: " << n.variables.size() << " variables\n";
  return kOk;
}

struct TargetResult {
  VarId var;
  Marginal marginal;
  Moments moments;
};

int run_infer(const std::string& path, const std::vector<std::string>& evidence, std::vector<std::string> targets,
              const std::string& format) {
  int code = kOk;
  auto n = load_checked(path, code);
  if (!n) return code;
  Evidence ev;
  try {
    ev = parse_evidence(*n, evidence);
    for (const auto& t : targets) n->variable(t);
  } catch (const Error& e) {
    return fail(kInput, e.what());
  }
  if (targets.empty())
    for (const auto& v : n->variables) targets.push_back(v.name);

  std::vector<TargetResult> results;
  double likelihood = 0.0;
  try {
    const JoinTree tree = JoinTree::for_network(*n);
    const Propagation state(tree, ev);
    for (const auto& t : targets) {
      auto [m, w] = normalize_marginal(query_marginal(state, t));
      if (results.empty()) likelihood = w;
      results.push_back({t, m, posterior_moments(m)});
    }
  } catch (const Error& e) {
    return fail(kInference, e.what());
  }

  if (format == "json") {
    ojson doc;
    doc["targets"] = ojson::object();
    for (const auto& r : results) {
      ojson masses = ojson::array();
      if (r.marginal.discrete) {
        for (std::size_t s = 0; s < r.marginal.states.size(); ++s)
          masses.push_back({{"state", r.marginal.states[s]}, {"mass", r.marginal.probabilities[s]}});
      } else {
        for (const auto& [x, m] : r.marginal.points) masses.push_back({{"value", x}, {"mass", m}});
      }
      doc["targets"][r.var] = {{"masses", masses},
                               {"mean", r.moments.mean},
                               {"variance", r.moments.variance},
                               {"pieces", r.marginal.density ? r.marginal.density->pieces().size() : 0}};
    }
    doc["evidence_likelihood"] = likelihood;
    std::cout << doc.dump(2) << "\n";
    return kOk;
  }

  std::cout << "evidence_likelihood " << num(likelihood) << "\n";
  for (const auto& r : results) {
    std::cout << r.var << "\n";
    if (r.marginal.discrete) {
      for (std::size_t s = 0; s < r.marginal.states.size(); ++s)
        std::cout << "  mass " << r.marginal.states[s] << " " << num(r.marginal.probabilities[s]) << "\n";
    } else {
      for (const auto& [x, m] : r.marginal.points) std::cout << "  mass " << num(x) << " " << num(m) << "\n";
      std::cout << "  pieces " << (r.marginal.density ? r.marginal.density->pieces().size() : 0) << "\n";
    }
    std::cout << "  mean " << num(r.moments.mean) << "\n";
    std::cout << "  variance " << num(r.moments.variance) << "\n";
  }
  return kOk;
}

int run_plot(const std::string& path, const std::vector<std::string>& evidence, const std::string& target,
             const std::string& out_path, int points) {
  int code = kOk;
  auto n = load_checked(path, code);
  if (!n) return code;
  Evidence ev;
  try {
    ev = parse_evidence(*n, evidence);
    n->variable(target);
  } catch (const Error& e) {
    return fail(kInput, e.what());
  }
  if (n->is_discrete(target)) return fail(kUsage, "InvalidArgument: plot needs a continuous target, " + target + " is discrete");

  Marginal m;
  try {
    const JoinTree tree = JoinTree::for_network(*n);
    const Propagation state(tree, ev);
    m = normalize_marginal(query_marginal(state, target)).first;
  } catch (const Error& e) {
    return fail(kInference, e.what());
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) return fail(kUsage, "InvalidArgument: cannot write " + out_path);
  out << "x,density\n";
  if (m.density && !m.density->pieces().empty()) {
    const auto [lo, hi] = support_interval(*m.density);
    for (int i = 0; i < points; ++i) {
      const double x = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
      out << num(x) << "," << num(evaluate(*m.density, {{target, x}})) << "\n";
    }
  }
  out << "\nx,mass\n";
  for (const auto& [x, w] : m.points) out << num(x) << "," << num(w) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("HYBRID_MTE_MAX_PIECES")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*env == '\0' || *end != '\0' || v <= 0)
      return fail(kUsage, std::string("InvalidArgument: HYBRID_MTE_MAX_PIECES must be a positive integer, got '") +
                              env + "'");
  }

  CLI::App app{"Exact inference for hybrid Bayesian networks"};
  app.require_subcommand(1);

  std::string model, format = "text", target, out_path;
  std::vector<std::string> evidence, targets;
  int points = 400;

  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("model", model, "Model file")->required();

  auto* infer = app.add_subcommand("infer", "Posterior marginals and moments");
  infer->add_option("model", model, "Model file")->required();
  infer->add_option("--evidence,-e", evidence, "Observation Var=value")->take_all();
  infer->add_option("--target,-t", targets, "Variable to report (default all)")->take_all();
  infer->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* plot = app.add_subcommand("plot", "Write the normalised marginal density as CSV");
  plot->add_option("model", model, "Model file")->required();
  plot->add_option("--target,-t", target, "Continuous variable")->required();
  plot->add_option("--evidence,-e", evidence, "Observation Var=value")->take_all();
  plot->add_option("--out,-o", out_path, "Output CSV path")->required();
  plot->add_option("--points", points, "Number of density rows")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, std::string("UsageError: ") + e.what());
  }

  if (*validate) return run_validate(model);
  if (*infer) return run_infer(model, evidence, targets, format);
  return run_plot(model, evidence, target, out_path, points);
}
