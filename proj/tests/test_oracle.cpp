// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "hmte/error.hpp"
#include "hmte/jointree.hpp"
#include "hmte/oracle.hpp"
#include "random_network.hpp"

namespace hmte {
namespace {

const std::string kModels = HMTE_MODELS_DIR;

const Network& five() {
  static const Network n = load_model(kModels + "/five_node.json");
  return n;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidArgument;
}

LinExpr v(const VarId& name, double c = 1.0) { return LinExpr::variable(name, c); }
LinExpr k(double c) { return LinExpr(c); }

const char* kUniformToy = R"({"variables":[{"name":"Z1","kind":"continuous"},
    {"name":"X1","kind":"deterministic","parents":["Z1"]}],
  "cpds":[{"var":"Z1","density":{"pieces":[{"region":["0 <= Z1 <= 1"],"terms":[{"coeff":1}]}]}},
          {"var":"X1","equations":"X1 = 2*Z1 - 1"}]})";

TEST(LinearSystem, PublishedPair) {
  const auto r = solve_linear_system({v("z1", -2) + v("z2") - k(1), v("z1", -3) - v("z2", 2) + v("z3") - k(1)}, {"z2"});
  EXPECT_TRUE(r.approx_equal(v("z1", -7) + v("z3") - k(3), 1e-12)) << r.to_string();
}

TEST(LinearSystem, HandCheckedPair) {
  const auto r = solve_linear_system({v("z1", 3) + v("z2") - k(2), v("z1", -3) - v("z2", 2) + v("z3") - k(1)}, {"z2"});
  EXPECT_TRUE(r.approx_equal(v("z1", 3) + v("z3") - k(5), 1e-12)) << r.to_string();
  EXPECT_FALSE(r.approx_equal(v("z1", -11) + v("z3") - k(3), 1e-6));
}

TEST(LinearSystem, Chain) {
  const auto r = solve_linear_system({v("z2") - v("z1"), v("z3") - v("z2")}, {"z2"});
  EXPECT_TRUE(r.approx_equal(v("z3") - v("z1"), 1e-15));
}

TEST(LinearSystem, TwoEliminations) {
  // a = b + 1, b = 2c, d = a + c  ->  d = 3c + 1
  const auto r = solve_linear_system({v("a") - v("b") - k(1), v("b") - v("c", 2), v("d") - v("a") - v("c")},
                                     {"a", "b"});
  EXPECT_TRUE(r.approx_equal(v("c", -3) + v("d") - k(1), 1e-12)) << r.to_string();
}

TEST(LinearSystem, Singular) {
  EXPECT_EQ(kind_of([] { solve_linear_system({v("a") - v("b"), v("c") - v("a")}, {"z"}); }),
            ErrorKind::NonInvertibleEquation);
  EXPECT_EQ(kind_of([] { solve_linear_system({v("a")}, {"a"}); }), ErrorKind::InvalidArgument);
}

TEST(Quadrature, PriorMeans) {
  EXPECT_NEAR(quadrature_posterior(five(), {}, "X1").mean, -0.2, 1e-6);
  EXPECT_NEAR(quadrature_posterior(five(), {}, "Z1").mean, 0.0, 1e-6);
  EXPECT_NEAR(quadrature_posterior(five(), {}, "X2").mean, -0.09, 1e-6);
}

TEST(Quadrature, UniformToy) {
  const Network n = parse_model(kUniformToy);
  const auto r = quadrature_posterior(n, {}, "X1");
  EXPECT_NEAR(r.mean, 0.0, 1e-6);
  EXPECT_NEAR(r.variance, 1.0 / 3.0, 1e-6);
  EXPECT_NEAR(r.evidence_weight, 1.0, 1e-12);
}

TEST(Quadrature, WeightStableUnderRefinement) {
  QuadratureSpec fine;
  fine.points_per_axis = 4001;
  const Evidence ev{{"X2", 1.0}};
  const double a = quadrature_posterior(five(), ev, "Z1").evidence_weight;
  const double b = quadrature_posterior(five(), ev, "Z1", fine).evidence_weight;
  EXPECT_NEAR(a, b, 1e-6 * b);
  const double c = quadrature_posterior(five(), {}, "X1").evidence_weight;
  const double d = quadrature_posterior(five(), {}, "X1", fine).evidence_weight;
  EXPECT_NEAR(c, d, 1e-6 * d);
}

TEST(Quadrature, MatchesEngineUnderEvidence) {
  const JoinTree t = JoinTree::for_network(five());
  const Propagation s(t, {{"X2", 1.0}});
  for (const char* name : {"Y1", "Z1", "Z2", "X1"}) {
    const auto q = quadrature_posterior(five(), {{"X2", 1.0}}, name);
    const auto [m, w] = normalize_marginal(query_marginal(s, name));
    const auto e = posterior_moments(m);
    EXPECT_NEAR(e.mean, q.mean, 1e-5 * std::max(1.0, std::abs(q.mean))) << name;
    EXPECT_NEAR(e.variance, q.variance, 1e-5 * q.variance) << name;
    EXPECT_NEAR(w, q.evidence_weight, 1e-6 * w) << name;
  }
}

TEST(Quadrature, MixedDistribution) {
  const Network n = load_model(kModels + "/mixed_distribution.json");
  const auto prior = quadrature_posterior(n, {}, "X");
  EXPECT_NEAR(prior.evidence_weight, 1.0, 1e-3);
  const auto seen = quadrature_posterior(n, {{"X", 1.0}}, "A");
  EXPECT_NEAR(seen.probabilities[0], 1.0, 1e-15);
  EXPECT_NEAR(seen.evidence_weight, 0.5 * prior.evidence_weight, 1e-9);
  // An observation off the point states comes from the density branch.
  const auto off = quadrature_posterior(n, {{"X", 3.0}}, "A");
  EXPECT_NEAR(off.probabilities[2], 1.0, 1e-15);
  EXPECT_NEAR(off.evidence_weight, 0.2 * 0.4000225, 1e-6);
}

TEST(Quadrature, Errors) {
  EXPECT_EQ(kind_of([] {
              QuadratureSpec s;
              s.points_per_axis = 4;
              quadrature_posterior(five(), {}, "X1", s);
            }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { quadrature_posterior(five(), {{"Y1", std::string("0")}, {"X1", 5.0}, {"Z1", 0.0}}, "Z2"); }),
            ErrorKind::InconsistentEvidence);

  std::string vars = R"({"name":"C0","kind":"continuous"})", cpds =
      R"({"var":"C0","density":{"template":"normal_mte","mean":"0","variance":1}})";
  for (int i = 1; i < 4; ++i) {
    const std::string c = "C" + std::to_string(i);
    vars += R"(,{"name":")" + c + R"(","kind":"continuous"})";
    cpds += R"(,{"var":")" + c + R"(","density":{"template":"normal_mte","mean":"0","variance":1}})";
  }
  const Network wide = parse_model(R"({"variables":[)" + vars + R"(],"cpds":[)" + cpds + "]}");
  EXPECT_EQ(kind_of([&] { quadrature_posterior(wide, {}, "C0"); }), ErrorKind::OracleDimension);
}

TEST(Sampling, PriorMean) {
  const auto rows = forward_sample(five(), 1000000, 11);
  double s = 0.0, s2 = 0.0;
  for (const auto& r : rows) {
    s += r[2];
    s2 += r[2] * r[2];
  }
  const double n = static_cast<double>(rows.size()), mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_LT(std::abs(mean + 0.2), 4.0 * sd / std::sqrt(n));
}

TEST(Sampling, Reproducible) {
  EXPECT_EQ(forward_sample(five(), 200, 5), forward_sample(five(), 200, 5));
  EXPECT_NE(forward_sample(five(), 200, 5), forward_sample(five(), 200, 6));
}

TEST(Sampling, DegenerateDiscrete) {
  const Network n = parse_model(R"({"variables":[{"name":"Y","kind":"discrete","states":["a","b"]}],
    "cpds":[{"var":"Y","table":[0.0,1.0]}]})");
  for (const auto& r : forward_sample(n, 1000, 3)) EXPECT_EQ(r[0], 1.0);
}

TEST(Sampling, ExplicitDensity) {
  const auto rows = forward_sample(parse_model(kUniformToy), 100000, 9);
  double s = 0.0;
  for (const auto& r : rows) {
    EXPECT_GE(r[0], 0.0);
    EXPECT_LE(r[0], 1.0);
    EXPECT_NEAR(r[1], 2 * r[0] - 1, 1e-15);
    s += r[1];
  }
  EXPECT_LT(std::abs(s / rows.size()), 4.0 * std::sqrt(1.0 / 3.0 / rows.size()));
}

TEST(Quadrature, RandomNetworksMatchEngine) {
  std::mt19937 rng(2024);
  int checked = 0, skipped = 0;
  while (checked < 25) {
    const auto c = test::random_case(rng);
    QuadratureSpec spec;
    spec.points_per_axis = 201;
    Moments e;
    double w = 0.0;
    try {
      const JoinTree t = JoinTree::for_network(c.net);
      const Propagation s(t, c.evidence);
      const auto nm = normalize_marginal(query_marginal(s, c.target));
      e = posterior_moments(nm.first);
      w = nm.second;
    } catch (const Error& err) {
      ASSERT_EQ(err.kind(), ErrorKind::UnsupportedElimination) << err.what();
      ASSERT_LT(++skipped, 10);
      continue;
    }
    const auto q = quadrature_posterior(c.net, c.evidence, c.target, spec);
    ++checked;
    EXPECT_NEAR(e.mean, q.mean, 1e-5 * std::max(1.0, std::abs(q.mean))) << c.description;
    EXPECT_NEAR(e.variance, q.variance, 1e-5 * std::max(1.0, q.variance)) << c.description;
    EXPECT_NEAR(w, q.evidence_weight, 1e-4 * w) << c.description;
  }
}

}  // namespace
}  // namespace hmte
