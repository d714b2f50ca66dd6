// Test-side oracles, kept independent of the library's spectral pipeline:
// closed-form derivatives, nodal quadrature of analytic integrands, a
// high-resolution quadrature rule, and a log-log slope fit.
#pragma once

#include "csck/grid.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Trapezoid quadrature of a smooth periodic function on [0,1) with M
/// nodes (spectrally exact for large M).
inline double quad_1d(const std::function<double(double)>& f, int M = 1 << 14) {
  double s = 0;
  for (int i = 0; i < M; ++i) s += f(double(i) / M);
  return s / M;
}

/// Nodal quadrature on the library's own grid, but with the integrand
/// supplied in closed form (independent of any Field computation).
inline double quad_grid(const csck::GridSpec& g,
                        const std::function<double(double, double)>& f) {
  double s = 0;
  if (g.n == 1) {
    for (int i = 0; i < g.N; ++i) s += f(double(i) / g.N, 0.0);
  } else {
    for (int i = 0; i < g.N; ++i)
      for (int j = 0; j < g.N; ++j) s += f(double(i) / g.N, double(j) / g.N);
  }
  return s * g.node_weight();
}

/// Least-squares slope of log(err) against log(t).
inline double loglog_slope(const std::vector<double>& t, const std::vector<double>& err) {
  const int n = int(t.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(t[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Max nodal difference between a Field and a closed-form function.
template <typename FieldT, typename F>
double max_node_error(const FieldT& fld, F&& exact) {
  const auto& g = fld.grid;
  double e = 0;
  if (g.n == 1) {
    for (int i = 0; i < g.N; ++i)
      e = std::max(e, std::abs(fld.values(i) - exact(double(i) / g.N, 0.0)));
  } else {
    for (int i = 0; i < g.N; ++i)
      for (int j = 0; j < g.N; ++j)
        e = std::max(e, std::abs(fld.values(Eigen::Index(i) * g.N + j) -
                                 exact(double(i) / g.N, double(j) / g.N)));
  }
  return e;
}

} // namespace oracle
