// Apache License, Version 2.0, refer to LICENSE.txt

#include "lp.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

namespace hmte::detail {

LpSolution maximize_from(const std::vector<std::vector<double>>& A,
                         const std::vector<double>& b,
                         const std::vector<double>& c,
                         const std::vector<double>& x0, double box) {
  constexpr double kPivotEps = 1e-12;
  const std::size_t n = x0.size();
  const std::size_t m = A.size();
  // Structural columns: y+_j (j < n) and y-_j (n + j), x = x0 + y+ - y-.
  const std::size_t rows = m + 2 * n;
  const std::size_t cols = 2 * n + rows;  // structural + slacks
  std::vector<std::vector<double>> T(rows, std::vector<double>(cols + 1, 0.0));
  std::vector<std::size_t> basis(rows);

  for (std::size_t i = 0; i < m; ++i) {
    double g = b[i];
    for (std::size_t j = 0; j < n; ++j) g += A[i][j] * x0[j];
    for (std::size_t j = 0; j < n; ++j) {
      T[i][j] = -A[i][j];
      T[i][n + j] = A[i][j];
    }
    T[i][2 * n + i] = 1.0;
    T[i][cols] = std::max(g, 0.0);
    basis[i] = 2 * n + i;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t up = m + 2 * j, lo = m + 2 * j + 1;
    T[up][j] = 1.0;
    T[up][n + j] = -1.0;
    T[up][2 * n + up] = 1.0;
    T[up][cols] = box;
    basis[up] = 2 * n + up;
    T[lo][j] = -1.0;
    T[lo][n + j] = 1.0;
    T[lo][2 * n + lo] = 1.0;
    T[lo][cols] = box;
    basis[lo] = 2 * n + lo;
  }

  // Reduced objective row (maximisation): r_j > 0 means improving.
  std::vector<double> r(cols + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    r[j] = c[j];
    r[n + j] = -c[j];
  }

  for (int iter = 0; iter < 50000; ++iter) {
    std::size_t enter = cols;
    for (std::size_t j = 0; j < cols; ++j) {
      if (r[j] > kPivotEps) {
        enter = j;
        break;
      }
    }
    if (enter == cols) break;

    std::size_t leave = rows;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows; ++i) {
      if (T[i][enter] > kPivotEps) {
        const double ratio = T[i][cols] / T[i][enter];
        if (ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && leave < rows && basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave == rows) break;  // unbounded; cannot happen with the box rows

    const double p = T[leave][enter];
    for (double& v : T[leave]) v /= p;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == leave) continue;
      const double f = T[i][enter];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols; ++j) T[i][j] -= f * T[leave][j];
    }
    const double f = r[enter];
    for (std::size_t j = 0; j <= cols; ++j) r[j] -= f * T[leave][j];
    basis[leave] = enter;
  }

  std::vector<double> y(2 * n, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    if (basis[i] < 2 * n) y[basis[i]] = T[i][cols];

  LpSolution sol;
  sol.x.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    sol.x[j] = x0[j] + y[j] - y[n + j];
    sol.value += c[j] * sol.x[j];
  }
  return sol;
}

}  // namespace hmte::detail
