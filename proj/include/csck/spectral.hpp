#pragma once

#include "csck/grid.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <complex>
#include <numbers>

namespace csck {

namespace detail {

/// Signed Fourier frequency of DFT bin k on an N-point grid; the Nyquist
/// bin maps to +N/2.
inline int signed_freq(int k, int N) { return k <= N / 2 ? k : k - N; }

template <typename Scalar>
using ComplexMat =
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unnormalized forward DFT along both axes of a row-major N x N block
/// (or a length-N vector when n = 1).
template <typename Scalar>
ComplexMat<Scalar> dft_grid(const GridSpec& g, const ArrayX<Scalar>& v) {
  Eigen::FFT<Scalar> fft;
  using CVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
  const int N = g.N;
  if (g.n == 1) {
    CVec in(N), out(N);
    for (int i = 0; i < N; ++i) in(i) = v(i);
    fft.fwd(out, in);
    ComplexMat<Scalar> M(1, N);
    M.row(0) = out.transpose();
    return M;
  }
  ComplexMat<Scalar> M(N, N);
  CVec in(N), out(N);
  for (int i = 0; i < N; ++i) { // rows: transform along axis 1
    for (int j = 0; j < N; ++j) in(j) = v(Eigen::Index(i) * N + j);
    fft.fwd(out, in);
    M.row(i) = out.transpose();
  }
  for (int j = 0; j < N; ++j) { // columns: transform along axis 0
    in = M.col(j);
    fft.fwd(out, in);
    M.col(j) = out;
  }
  return M;
}

/// Inverse of dft_grid, returning the real part.
template <typename Scalar>
ArrayX<Scalar> idft_grid_real(const GridSpec& g, ComplexMat<Scalar> M) {
  Eigen::FFT<Scalar> fft;
  using CVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
  const int N = g.N;
  ArrayX<Scalar> out(g.num_nodes());
  CVec in(N), res(N);
  if (g.n == 1) {
    in = M.row(0).transpose();
    fft.inv(res, in);
    for (int i = 0; i < N; ++i) out(i) = res(i).real();
    return out;
  }
  for (int j = 0; j < N; ++j) {
    in = M.col(j);
    fft.inv(res, in);
    M.col(j) = res;
  }
  for (int i = 0; i < N; ++i) {
    in = M.row(i).transpose();
    fft.inv(res, in);
    for (int j = 0; j < N; ++j) out(Eigen::Index(i) * N + j) = res(j).real();
  }
  return out;
}

/// Multiply spectrum in place by prod_a (2*pi*i*k_a)^{order_a}.  Odd-order
/// factors vanish at the Nyquist frequency of their axis.
template <typename Scalar>
void apply_derivative_symbol(const GridSpec& g, ComplexMat<Scalar>& M,
                             const std::array<int, 2>& order) {
  using C = std::complex<Scalar>;
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  const int N = g.N;
  auto axis_factor = [&](int k, int ord) -> C {
    if (ord == 0) return C(1);
    if (ord % 2 == 1 && k == N / 2) return C(0);
    const int kk = signed_freq(k, N);
    return std::pow(C(0, two_pi * kk), ord);
  };
  if (g.n == 1) {
    for (int k = 0; k < N; ++k) M(0, k) *= axis_factor(k, order[0]);
    return;
  }
  for (int k0 = 0; k0 < N; ++k0) {
    const C f0 = axis_factor(k0, order[0]);
    for (int k1 = 0; k1 < N; ++k1) M(k0, k1) = M(k0, k1) * f0 * axis_factor(k1, order[1]);
  }
}

} // namespace detail

/// Exact derivative of the trigonometric interpolant of f.  The
/// multi-index gives the derivative order per axis (total order <= 4);
/// for n = 1 only order[0] is used.
template <typename Scalar>
Field<Scalar> spectral_derivative(const Field<Scalar>& f, const std::array<int, 2>& order) {
  const int total = order[0] + (f.grid.n == 2 ? order[1] : 0);
  if (order[0] < 0 || order[1] < 0 || total > 4)
    throw std::invalid_argument("spectral_derivative: multi-index order must be in [0,4]");
  auto M = detail::dft_grid(f.grid, f.values);
  detail::apply_derivative_symbol(f.grid, M, order);
  return Field<Scalar>(f.grid, detail::idft_grid_real(f.grid, std::move(M)));
}

template <typename Scalar>
Field<Scalar> spectral_derivative(const Field<Scalar>& f, int order_x) {
  return spectral_derivative(f, std::array<int, 2>{order_x, 0});
}

/// All second derivatives of u in one forward transform.
/// n = 1: {u_xx}; n = 2: {u_xx, u_xy, u_yy}.
template <typename Scalar>
std::array<ArrayX<Scalar>, 3> hessian_arrays(const Field<Scalar>& u) {
  const GridSpec& g = u.grid;
  auto M = detail::dft_grid(g, u.values);
  std::array<ArrayX<Scalar>, 3> out;
  if (g.n == 1) {
    auto Mxx = M;
    detail::apply_derivative_symbol(g, Mxx, {2, 0});
    out[0] = detail::idft_grid_real(g, std::move(Mxx));
    return out;
  }
  {
    auto Mxx = M;
    detail::apply_derivative_symbol(g, Mxx, {2, 0});
    out[0] = detail::idft_grid_real(g, std::move(Mxx));
  }
  {
    auto Mxy = M;
    detail::apply_derivative_symbol(g, Mxy, {1, 1});
    out[1] = detail::idft_grid_real(g, std::move(Mxy));
  }
  detail::apply_derivative_symbol(g, M, {0, 2});
  out[2] = detail::idft_grid_real(g, std::move(M));
  return out;
}

/// DFT coefficient of the mode cos(2*pi*(k0*x + k1*y)): returns the real
/// cosine amplitude 2*Re(hat f)/N^n (k nonzero, below Nyquist).
template <typename Scalar>
std::complex<Scalar> dft_mode(const Field<Scalar>& f, int k0, int k1 = 0) {
  auto M = detail::dft_grid(f.grid, f.values);
  const int N = f.grid.N;
  auto wrap = [N](int k) { return ((k % N) + N) % N; };
  std::complex<Scalar> c =
      f.grid.n == 1 ? M(0, wrap(k0)) : M(wrap(k0), wrap(k1));
  return c / Scalar(f.grid.num_nodes());
}

} // namespace csck
