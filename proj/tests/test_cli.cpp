// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hmte/oracle.hpp"

namespace hmte {
namespace {

const std::string kModels = HMTE_MODELS_DIR;
const std::string kCli = HMTE_CLI_PATH;

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "hmte_cli_" + name;
}

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string err_path = temp_path("stderr.txt");
  const std::string cmd = env + " '" + kCli + "' " + args + " 2>'" + err_path + "'";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = temp_path(name);
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

const std::string five = kModels + "/five_node.json";
const std::string mixed = kModels + "/mixed_distribution.json";

std::vector<std::vector<std::string>> csv_block(const std::string& text, const std::string& header) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  bool inside = false;
  while (std::getline(in, line)) {
    if (line == header) {
      inside = true;
      continue;
    }
    if (!inside) continue;
    if (line.empty()) break;
    const auto c = line.find(',');
    rows.push_back({line.substr(0, c), line.substr(c + 1)});
  }
  return rows;
}

TEST(Cli, Validate) {
  const Outcome ok = run("validate '" + five + "'");
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(ok.err.empty());

  const std::string cyclic = write_temp("cyclic.json", R"({"variables":[
      {"name":"A","kind":"continuous","parents":["B"]},{"name":"B","kind":"continuous","parents":["A"]}],
    "cpds":[{"var":"A","density":{"template":"normal_mte","mean":"B","variance":1}},
            {"var":"B","density":{"template":"normal_mte","mean":"A","variance":1}}]})");
  const Outcome bad = run("validate '" + cyclic + "'");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("cycle"), std::string::npos) << bad.out;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate x").code, 1);
  EXPECT_EQ(run("infer '" + five + "' --format yaml").code, 1);
  EXPECT_EQ(run("plot '" + five + "' -t Z1 -o /dev/null --points 0").code, 1);
  EXPECT_EQ(run("infer '" + five + "'", "HYBRID_MTE_MAX_PIECES=abc").code, 1);

  EXPECT_EQ(run("infer '" + kModels + "/missing.json'").code, 2);
  EXPECT_EQ(run("infer '" + write_temp("garbage.json", "{not json") + "'").code, 2);
  EXPECT_EQ(run("infer '" + five + "' -e Q=1").code, 2);
  EXPECT_EQ(run("infer '" + five + "' -e Y1=nine").code, 2);
  EXPECT_EQ(run("infer '" + five + "' -e X2=one").code, 2);
  EXPECT_EQ(run("infer '" + five + "' -e X2").code, 2);
  EXPECT_EQ(run("infer '" + five + "' -t Nope").code, 2);

  EXPECT_EQ(run("infer '" + five + "' -e Y1=0 -e X1=5 -e Z1=0 -t Z2").code, 3);
  EXPECT_EQ(run("infer '" + five + "'", "HYBRID_MTE_MAX_PIECES=1").code, 3);
}

TEST(Cli, ErrorsAreOneLine) {
  for (const Outcome& r : {run("infer '" + five + "' -e Y1=nine"), run("infer '" + five + "' -e Y1=0 -e X1=5 -e Z1=0"),
                       run("bogus")}) {
    ASSERT_FALSE(r.err.empty());
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
    EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
  }
  EXPECT_NE(run("infer '" + five + "' -e Y1=nine").err.find("UnknownState"), std::string::npos);
  EXPECT_NE(run("infer '" + five + "'", "HYBRID_MTE_MAX_PIECES=1").err.find("CapacityExceeded"), std::string::npos);
}

TEST(Cli, PriorMean) {
  const Outcome r = run("infer '" + five + "' --target X1 --format json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["targets"]["X1"]["mean"].get<double>(), -0.2, 1e-6);
  EXPECT_EQ(j["targets"].size(), 1u);
}

TEST(Cli, PosteriorMatchesOracle) {
  const Outcome r = run("infer '" + five + "' -e X2=1 -t Z2 Y1 --format json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const Network n = load_model(five);
  for (const char* v : {"Z2", "Y1"}) {
    const auto q = quadrature_posterior(n, {{"X2", 1.0}}, v);
    EXPECT_NEAR(j["targets"][v]["mean"].get<double>(), q.mean, 1e-5 * std::max(1.0, std::abs(q.mean))) << v;
    EXPECT_NEAR(j["targets"][v]["variance"].get<double>(), q.variance, 1e-5 * q.variance) << v;
    EXPECT_NEAR(j["evidence_likelihood"].get<double>(), q.evidence_weight, 1e-6 * q.evidence_weight);
  }
  EXPECT_EQ(j["targets"]["Y1"]["masses"].size(), 2u);
  EXPECT_EQ(j["targets"]["Y1"]["masses"][0]["state"], "0");
}

TEST(Cli, JsonIsDeterministic) {
  const std::string args = "infer '" + five + "' -e X2=1 --format json";
  const Outcome a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(nlohmann::json::parse(j.dump()), j);
  EXPECT_EQ(j["targets"].size(), 5u);
  for (const auto& [name, t] : j["targets"].items())
    for (const char* key : {"masses", "mean", "variance", "pieces"}) EXPECT_TRUE(t.contains(key)) << name << key;
}

TEST(Cli, TextOutput) {
  const Outcome r = run("infer '" + mixed + "' -t X");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("evidence_likelihood ", 0), 0u);
  EXPECT_NE(r.out.find("  mass 1 0.5\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("  mass 2 0.3\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("  mean 1.7\n"), std::string::npos) << r.out;
}

TEST(Cli, PlotMixedDistribution) {
  const std::string out = temp_path("mixed.csv");
  const Outcome r = run("plot '" + mixed + "' -t X -o '" + out + "' --points 2001");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(out);
  const auto dens = csv_block(text, "x,density");
  const auto mass = csv_block(text, "x,mass");
  ASSERT_EQ(dens.size(), 2001u);
  double area = 0.0;
  for (std::size_t i = 1; i < dens.size(); ++i)
    area += 0.5 * (std::stod(dens[i][1]) + std::stod(dens[i - 1][1])) * (std::stod(dens[i][0]) - std::stod(dens[i - 1][0]));
  EXPECT_NEAR(area, 0.2, 1e-3);
  ASSERT_EQ(mass.size(), 2u);
  EXPECT_DOUBLE_EQ(std::stod(mass[0][0]), 1.0);
  EXPECT_DOUBLE_EQ(std::stod(mass[0][1]), 0.5);
  EXPECT_DOUBLE_EQ(std::stod(mass[1][0]), 2.0);
  EXPECT_DOUBLE_EQ(std::stod(mass[1][1]), 0.3);
}

TEST(Cli, PlotUniform) {
  const std::string model = write_temp("uniform.json", R"({"variables":[{"name":"U","kind":"continuous"}],
    "cpds":[{"var":"U","density":{"pieces":[{"region":["0 <= U <= 1"],"terms":[{"coeff":1}]}]}}]})");
  const std::string out = temp_path("uniform.csv");
  ASSERT_EQ(run("plot '" + model + "' -t U -o '" + out + "' --points 3").code, 0);
  const auto rows = csv_block(slurp(out), "x,density");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(std::stod(rows[i][0]), 0.5 * i, 1e-12);
    EXPECT_NEAR(std::stod(rows[i][1]), 1.0, 1e-12);
  }
  EXPECT_TRUE(csv_block(slurp(out), "x,mass").empty());
}

TEST(Cli, PlotTemplatePeak) {
  const std::string out = temp_path("z1.csv");
  ASSERT_EQ(run("plot '" + five + "' -t Z1 -o '" + out + "' --points 601").code, 0);
  const auto rows = csv_block(slurp(out), "x,density");
  ASSERT_EQ(rows.size(), 601u);
  EXPECT_NEAR(std::stod(rows[300][0]), 0.0, 1e-9);
  EXPECT_NEAR(std::stod(rows[300][1]), 0.4000, 1e-4);
}

}  // namespace
}  // namespace hmte
