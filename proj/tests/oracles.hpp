#pragma once

// Reference implementations used only by tests. They work on plain nested vectors and
// share no code with the library so a bug cannot cancel itself out.

#include <cmath>
#include <cstddef>
#include <vector>

#include "blockecho/numkern/matrix.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const blockecho::numkern::Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline Grid matmul(const Grid& a, const Grid& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  Grid c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i][p]) * b[p][j];
      c[i][j] = static_cast<double>(s);
    }
  return c;
}

// Generalized KL over observed cells, straight from the definition.
inline double kl(const Grid& x, const Grid& xhat, const Grid& mask) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      if (mask[i][j] == 0.0) continue;
      const double a = x[i][j], b = xhat[i][j];
      s += (a > 0.0 ? a * std::log(a / b) : 0.0) - a + b;
    }
  return static_cast<double>(s);
}

// One masked Lee-Seung KL update written element by element: U first, then V with the
// refreshed U.
inline void mu_step(const Grid& x, const Grid& mask, Grid& u, Grid& v) {
  const std::size_t m = x.size(), n = x[0].size(), h = v.size();
  auto approx = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t a = 0; a < h; ++a) s += u[i][a] * v[a][j];
    return s;
  };
  Grid nu = u;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t a = 0; a < h; ++a) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[i][j] == 0.0) continue;
        num += v[a][j] * x[i][j] / approx(i, j);
        den += v[a][j];
      }
      if (den > 0.0) nu[i][a] = u[i][a] * num / den;
    }
  u = nu;
  Grid nv = v;
  for (std::size_t a = 0; a < h; ++a)
    for (std::size_t j = 0; j < n; ++j) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (mask[i][j] == 0.0) continue;
        num += u[i][a] * x[i][j] / approx(i, j);
        den += u[i][a];
      }
      if (den > 0.0) nv[a][j] = v[a][j] * num / den;
    }
  v = nv;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace oracle
