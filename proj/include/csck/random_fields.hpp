#pragma once

#include "csck/grid.hpp"
#include "csck/metric.hpp"

#include <cstdint>
#include <random>

namespace csck {

/// Deterministic uniform double in [-1, 1) from a raw 64-bit stream
/// (independent of the standard library's distribution implementations).
inline double unit_draw(std::mt19937_64& rng) {
  return 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
}

/// Seeded random Kahler potential: a low-mode trigonometric polynomial,
/// mean-zero, rescaled so the Gershgorin bound keeps the minimum
/// eigenvalue of I + Hess(u) at or above 1 - hess_amplitude.
template <typename Scalar = double>
Field<Scalar> random_kahler_potential(GridSpec grid, std::uint64_t seed,
                                      double hess_amplitude = 0.3, int max_mode = 3) {
  if (!(hess_amplitude > 0 && hess_amplitude < 1))
    throw std::invalid_argument("random_kahler_potential: hess_amplitude must be in (0,1)");
  std::mt19937_64 rng(seed);
  Field<Scalar> u = Field<Scalar>::zero(grid);
  const double two_pi = 2.0 * std::numbers::pi_v<double>;

  auto add_mode = [&](int k0, int k1) {
    const double k2 = double(k0) * k0 + double(k1) * k1;
    if (k2 == 0) return;
    const double scale = 1.0 / (1.0 + k2 * k2);
    const double c = scale * unit_draw(rng);
    const double s = scale * unit_draw(rng);
    for (Eigen::Index idx = 0; idx < grid.num_nodes(); ++idx) {
      const double x = double(idx / (grid.n == 1 ? 1 : grid.N)) / grid.N;
      const double y = grid.n == 1 ? 0.0 : double(idx % grid.N) / grid.N;
      const double phase = two_pi * (k0 * x + k1 * y);
      u.values(idx) += Scalar(c * std::cos(phase) + s * std::sin(phase));
    }
  };

  if (grid.n == 1) {
    for (int k = 1; k <= max_mode; ++k) add_mode(k, 0);
  } else {
    for (int k0 = -max_mode; k0 <= max_mode; ++k0)
      for (int k1 = 0; k1 <= max_mode; ++k1) {
        if (k1 == 0 && k0 <= 0) continue; // one representative per mode pair
        add_mode(k0, k1);
      }
  }

  auto hess = SymmetricMatrixField<Scalar>::shifted_hessian(u, Scalar(0));
  ArrayX<Scalar> gersh;
  if (grid.n == 1)
    gersh = hess.xx.abs();
  else
    gersh = (hess.xx.abs() + hess.xy.abs()).max(hess.yy.abs() + hess.xy.abs());
  const Scalar m = gersh.maxCoeff();
  if (m > Scalar(0)) u.values *= Scalar(hess_amplitude) / m;
  return mean_zero(std::move(u));
}

} // namespace csck
