// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <random>
#include <string>

#include "hmte/jointree.hpp"
#include "support.hpp"

// Closed forms of the messages of the five-variable network under X2 = 1,
// written with the template formula only.
namespace hmte::test::five_node {

inline double phi1(double z1) { return template_value(z1); }
inline double phi2(double x1, double z2) { return template_value(z2 - 0.6 * x1); }
inline double phi3(double x1, double z1) { return phi2(x1, (1.0 - 0.4 * z1) / 0.75) / 0.75; }
inline double phi40(double x1) {
  const double z1 = (x1 + 1.0) / 2.0;
  return 0.5 * phi1(z1) * phi3(x1, z1);
}
inline double phi41(double x1) {
  const double z1 = (x1 - 1.0) / 0.25;
  return phi1(z1) * phi3(x1, z1) / 0.25;
}
inline double phi50(double z1) { return phi3(2.0 * z1 - 1.0, z1); }
inline double phi51(double z1) { return phi3(0.25 * z1 + 1.0, z1); }
inline double phi60(double z1, double z2) { return phi2(2.0 * z1 - 1.0, z2); }
inline double phi61(double z1, double z2) { return phi2(0.25 * z1 + 1.0, z2); }
inline double phi70(double x2, double z2) {
  const double z1 = (x2 - 0.75 * z2) / 0.4;
  return phi1(z1) * phi60(z1, z2) / 0.4;
}
inline double phi71(double x2, double z2) {
  const double z1 = (x2 - 0.75 * z2) / 0.4;
  return phi1(z1) * phi61(z1, z2) / 0.4;
}
inline double phi80(double z2) { return phi70(1.0, z2); }
inline double phi81(double z2) { return phi71(1.0, z2); }

// chi(Y1 = j) as the integral of phi4j.
inline double chi(int j) {
  if (j == 0)
    return quad_split(phi40, {[](double x) { return (x + 1) / 2; },
                              [](double x) { return (1 - 0.4 * (x + 1) / 2) / 0.75 - 0.6 * x; }},
                      -8.0, 8.0);
  return quad_split(phi41, {[](double x) { return (x - 1) / 0.25; },
                            [](double x) { return (1 - 0.4 * (x - 1) / 0.25) / 0.75 - 0.6 * x; }},
                    -8.0, 8.0);
}

// Product of every potential in a bucket at one point.
inline double bucket_value(const Bucket& b, const std::map<VarId, int>& states, const Point& x) {
  double v = 1.0;
  for (const auto& p : b.potentials) {
    Configuration cfg;
    for (const auto& d : p.discrete_vars()) cfg.push_back(states.at(d.name));
    const PotentialEntry* e = p.at(cfg);
    if (!e) return 0.0;
    v *= e->mass() * evaluate_product(e->factors, x);
  }
  return v;
}

}  // namespace hmte::test::five_node
