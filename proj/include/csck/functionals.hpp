#pragma once

#include "csck/grid.hpp"
#include "csck/metric.hpp"

#include <optional>
#include <sstream>

namespace csck {

/// Closed (1,1)-form in the class a*{omega}: chi = a*omega + i ddbar psi.
/// Its pointwise matrix is a*I + Hess(psi).
template <typename Scalar = double>
struct TwistForm {
  Scalar a = Scalar(0);
  Field<Scalar> psi;

  TwistForm() = default;
  TwistForm(Scalar a_, Field<Scalar> psi_) : a(a_), psi(std::move(psi_)) {}

  static TwistForm zero(GridSpec g) { return TwistForm(Scalar(0), Field<Scalar>::zero(g)); }

  const GridSpec& grid() const { return psi.grid; }

  /// chi_bar = n * a on the torus ({chi}.{omega}^{n-1}/{omega}^n = a).
  Scalar chi_bar() const { return Scalar(psi.grid.n) * a; }

  SymmetricMatrixField<Scalar> matrix_field() const {
    return SymmetricMatrixField<Scalar>::shifted_hessian(psi, a);
  }

  Scalar min_eigenvalue() const { return matrix_field().min_eigenvalue().minCoeff(); }

  bool is_semipositive(Scalar tol = Scalar(1e-10)) const { return min_eigenvalue() >= -tol; }

  friend TwistForm operator+(const TwistForm& x, const TwistForm& y) {
    require_same_grid(x.grid(), y.grid(), "TwistForm +");
    return TwistForm(x.a + y.a, x.psi + y.psi);
  }
  friend TwistForm operator*(Scalar s, const TwistForm& x) { return TwistForm(s * x.a, s * x.psi); }
};

/// The twist representing omega_u = omega + i ddbar u, i.e. (a, psi) = (1, u).
template <typename Scalar>
TwistForm<Scalar> omega_twist(const Field<Scalar>& u) {
  return TwistForm<Scalar>(Scalar(1), u);
}

/// The twist representing -Ric(omega_u) = i ddbar log det g_u on the flat
/// torus; its class is zero since c_1 = 0.
template <typename Scalar>
TwistForm<Scalar> minus_ricci_twist(const HessianMetric<Scalar>& m_u) {
  return TwistForm<Scalar>(Scalar(0), log_density(m_u));
}

namespace detail {

/// Quadrature of w * density over the grid (V = 1).
template <typename Scalar>
Scalar integral(const GridSpec& g, const ArrayX<Scalar>& integrand) {
  return integrand.sum() * Scalar(g.node_weight());
}

} // namespace detail

/// Monge-Ampere energy E(u,v) = (1/((n+1)V)) * Int (v-u) sum_i
/// omega_u^i wedge omega_v^{n-i}.  Cocycle: E(u,v) + E(v,w) = E(u,w).
template <typename Scalar>
Scalar energy_E(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v) {
  const GridSpec& g = m_u.grid();
  require_same_grid(g, m_v.grid(), "energy_E");
  ArrayX<Scalar> diff = m_v.potential.values - m_u.potential.values;
  ArrayX<Scalar> dens;
  if (g.n == 1)
    dens = m_u.g.xx + m_v.g.xx;
  else
    dens = m_u.det_g + mixed_det(m_u.g, m_v.g) + m_v.det_g;
  return detail::integral(g, ArrayX<Scalar>(diff * dens)) / Scalar(g.n + 1);
}

/// Aubin I-functional: (1/V) Int (v-u)(omega_u^n - omega_v^n) >= 0.
template <typename Scalar>
Scalar func_I(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v) {
  require_same_grid(m_u.grid(), m_v.grid(), "func_I");
  ArrayX<Scalar> diff = m_v.potential.values - m_u.potential.values;
  return detail::integral(m_u.grid(), ArrayX<Scalar>(diff * (m_u.det_g - m_v.det_g)));
}

/// Aubin J-functional: (1/V) Int (v-u) omega_u^n - E(u,v) >= 0.
template <typename Scalar>
Scalar func_J(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v) {
  require_same_grid(m_u.grid(), m_v.grid(), "func_J");
  ArrayX<Scalar> diff = m_v.potential.values - m_u.potential.values;
  return detail::integral(m_u.grid(), ArrayX<Scalar>(diff * m_u.det_g)) - energy_E(m_u, m_v);
}

/// Relative entropy of the volume forms, (1/V) Int log(det_v/det_u) det_v.
/// Nonnegative by Jensen.
template <typename Scalar>
Scalar entropy(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v) {
  require_same_grid(m_u.grid(), m_v.grid(), "entropy");
  ArrayX<Scalar> logratio = (m_v.det_g / m_u.det_g).log();
  return detail::integral(m_u.grid(), ArrayX<Scalar>(logratio * m_v.det_g));
}

/// Twist energy J^chi(u,v) = (1/V) Int (v-u) chi wedge sum_{i<n}
/// omega_u^i wedge omega_v^{n-1-i}  -  chi_bar * E(u,v).
template <typename Scalar>
Scalar j_chi(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v,
             const TwistForm<Scalar>& chi) {
  const GridSpec& g = m_u.grid();
  require_same_grid(g, m_v.grid(), "j_chi");
  require_same_grid(g, chi.grid(), "j_chi twist");
  ArrayX<Scalar> diff = m_v.potential.values - m_u.potential.values;
  auto X = chi.matrix_field();
  ArrayX<Scalar> dens;
  if (g.n == 1)
    dens = X.xx;
  else
    dens = mixed_det(m_u.g, X) + mixed_det(m_v.g, X);
  return detail::integral(g, ArrayX<Scalar>(diff * dens)) - chi.chi_bar() * energy_E(m_u, m_v);
}

/// Mabuchi K-energy, K(u,v) = Ent(u,v) + J^{-Ric(omega_u)}(u,v).  On the
/// flat torus with base u = 0 this reduces to the entropy.
template <typename Scalar>
Scalar k_energy(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v,
                const BackgroundGeometry<Scalar>& bg) {
  require_same_grid(m_u.grid(), bg.grid, "k_energy");
  return entropy(m_u, m_v) + j_chi(m_u, m_v, minus_ricci_twist(m_u));
}

/// chi-twisted K-energy, K^chi = K + J^chi.
template <typename Scalar>
Scalar twisted_k_energy(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v,
                        const TwistForm<Scalar>& chi, const BackgroundGeometry<Scalar>& bg) {
  return k_energy(m_u, m_v, bg) + j_chi(m_u, m_v, chi);
}

/// d1-comparable proxy: (1/V) Int |u-v| (omega_u^n + omega_v^n).
/// Symmetric; zero iff u = v on the grid.
template <typename Scalar>
Scalar quasi_d1(const HessianMetric<Scalar>& m_u, const HessianMetric<Scalar>& m_v) {
  require_same_grid(m_u.grid(), m_v.grid(), "quasi_d1");
  ArrayX<Scalar> absdiff = (m_u.potential.values - m_v.potential.values).abs();
  return detail::integral(m_u.grid(), ArrayX<Scalar>(absdiff * (m_u.det_g + m_v.det_g)));
}

// Field-level conveniences (each builds the metrics on the fly).

template <typename Scalar>
Scalar energy_E(const Field<Scalar>& u, const Field<Scalar>& v) {
  return energy_E(hessian_metric(u), hessian_metric(v));
}
template <typename Scalar>
Scalar func_I(const Field<Scalar>& u, const Field<Scalar>& v) {
  return func_I(hessian_metric(u), hessian_metric(v));
}
template <typename Scalar>
Scalar func_J(const Field<Scalar>& u, const Field<Scalar>& v) {
  return func_J(hessian_metric(u), hessian_metric(v));
}
template <typename Scalar>
Scalar entropy(const Field<Scalar>& u, const Field<Scalar>& v) {
  return entropy(hessian_metric(u), hessian_metric(v));
}
template <typename Scalar>
Scalar j_chi(const Field<Scalar>& u, const Field<Scalar>& v, const TwistForm<Scalar>& chi) {
  return j_chi(hessian_metric(u), hessian_metric(v), chi);
}
template <typename Scalar>
Scalar k_energy(const Field<Scalar>& u, const Field<Scalar>& v,
                const BackgroundGeometry<Scalar>& bg) {
  return k_energy(hessian_metric(u), hessian_metric(v), bg);
}
template <typename Scalar>
Scalar twisted_k_energy(const Field<Scalar>& u, const Field<Scalar>& v,
                        const TwistForm<Scalar>& chi, const BackgroundGeometry<Scalar>& bg) {
  return twisted_k_energy(hessian_metric(u), hessian_metric(v), chi, bg);
}
template <typename Scalar>
Scalar quasi_d1(const Field<Scalar>& u, const Field<Scalar>& v) {
  return quasi_d1(hessian_metric(u), hessian_metric(v));
}

/// Shift u by a constant so that E(0, result) = 0 (the slice H_0).
/// Uses E(0, u + c) = E(0, u) + c.
template <typename Scalar>
Field<Scalar> normalize_E0(const Field<Scalar>& u) {
  auto m0 = hessian_metric(Field<Scalar>::zero(u.grid));
  Scalar e = energy_E(m0, hessian_metric(u));
  Field<Scalar> w = u;
  w.values -= e;
  return w;
}

/// Aggregate of the functional values for a pair of potentials.
template <typename Scalar = double>
struct FunctionalReport {
  Scalar E, I, J, Ent;
  std::optional<Scalar> Jchi;
  Scalar K;
  std::optional<Scalar> Kchi;
  Scalar quasi_d1;

  /// Positivity sanity bounds that hold for any Kahler pair.
  void validate() const {
    auto check = [](const char* name, Scalar val, Scalar lo) {
      if (!(val >= lo)) {
        std::ostringstream os;
        os << "FunctionalReport: " << name << " = " << val << " violates lower bound " << lo;
        throw std::runtime_error(os.str());
      }
    };
    check("I", I, Scalar(-1e-10));
    check("J", J, Scalar(-1e-10));
    check("I-J", I - J, Scalar(-1e-10));
    check("Ent", Ent, Scalar(-1e-12));
  }
};

template <typename Scalar>
FunctionalReport<Scalar> functional_report(const Field<Scalar>& u, const Field<Scalar>& v,
                                           const std::optional<TwistForm<Scalar>>& chi,
                                           const BackgroundGeometry<Scalar>& bg) {
  auto m_u = hessian_metric(u);
  auto m_v = hessian_metric(v);
  FunctionalReport<Scalar> r;
  r.E = energy_E(m_u, m_v);
  r.I = func_I(m_u, m_v);
  r.J = func_J(m_u, m_v);
  r.Ent = entropy(m_u, m_v);
  r.K = k_energy(m_u, m_v, bg);
  if (chi) {
    r.Jchi = j_chi(m_u, m_v, *chi);
    r.Kchi = r.K + *r.Jchi;
  }
  r.quasi_d1 = quasi_d1(m_u, m_v);
  r.validate();
  return r;
}

} // namespace csck
