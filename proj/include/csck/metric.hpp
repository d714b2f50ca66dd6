#pragma once

#include "csck/grid.hpp"
#include "csck/spectral.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace csck {

/// Pointwise symmetric n x n matrix field.  For n = 1 only xx is used.
template <typename Scalar = double>
struct SymmetricMatrixField {
  GridSpec grid;
  ArrayX<Scalar> xx, xy, yy;

  static SymmetricMatrixField identity(GridSpec g, Scalar scale = Scalar(1)) {
    SymmetricMatrixField m;
    m.grid = g;
    m.xx = ArrayX<Scalar>::Constant(g.num_nodes(), scale);
    if (g.n == 2) {
      m.xy = ArrayX<Scalar>::Zero(g.num_nodes());
      m.yy = ArrayX<Scalar>::Constant(g.num_nodes(), scale);
    }
    return m;
  }

  /// I*shift + Hess(u), the metric/twist matrix of a potential.
  static SymmetricMatrixField shifted_hessian(const Field<Scalar>& u, Scalar shift) {
    auto h = hessian_arrays(u);
    SymmetricMatrixField m;
    m.grid = u.grid;
    m.xx = h[0] + shift;
    if (u.grid.n == 2) {
      m.xy = std::move(h[1]);
      m.yy = h[2] + shift;
    }
    return m;
  }

  SymmetricMatrixField& operator+=(const SymmetricMatrixField& o) {
    require_same_grid(grid, o.grid, "SymmetricMatrixField +=");
    xx += o.xx;
    if (grid.n == 2) {
      xy += o.xy;
      yy += o.yy;
    }
    return *this;
  }
  SymmetricMatrixField& operator*=(Scalar s) {
    xx *= s;
    if (grid.n == 2) {
      xy *= s;
      yy *= s;
    }
    return *this;
  }
  friend SymmetricMatrixField operator+(SymmetricMatrixField a, const SymmetricMatrixField& b) {
    return a += b;
  }
  friend SymmetricMatrixField operator*(Scalar s, SymmetricMatrixField a) { return a *= s; }

  ArrayX<Scalar> det() const {
    if (grid.n == 1) return xx;
    return xx * yy - xy.square();
  }

  /// Pointwise smallest eigenvalue.
  ArrayX<Scalar> min_eigenvalue() const {
    if (grid.n == 1) return xx;
    ArrayX<Scalar> half_tr = (xx + yy) / Scalar(2);
    ArrayX<Scalar> rad = (((xx - yy) / Scalar(2)).square() + xy.square()).sqrt();
    return half_tr - rad;
  }

  /// Pointwise trace against another symmetric matrix field:
  /// sum_{jk} A_{jk} B_{jk}.
  ArrayX<Scalar> contract(const SymmetricMatrixField& B) const {
    if (grid.n == 1) return xx * B.xx;
    return xx * B.xx + Scalar(2) * xy * B.xy + yy * B.yy;
  }
};

/// Mixed determinant density: (det(A+B) - det A - det B)/2, the pointwise
/// avatar of the wedge product of the corresponding (1,1)-forms (n = 2).
/// Satisfies mixed_det(A, A) = det A.
template <typename Scalar>
ArrayX<Scalar> mixed_det(const SymmetricMatrixField<Scalar>& A,
                         const SymmetricMatrixField<Scalar>& B) {
  require_same_grid(A.grid, B.grid, "mixed_det");
  if (A.grid.n == 1) return A.xx * B.xx; // not used as a wedge density in n = 1
  return (A.xx * B.yy + A.yy * B.xx) / Scalar(2) - A.xy * B.xy;
}

/// The potential's metric left the Kahler cone: min eigenvalue of
/// I + Hess(u) dropped to eps_pd or below at some node.
class NotKahlerError : public std::runtime_error {
 public:
  NotKahlerError(Eigen::Index node, double eig, double eps_pd)
      : std::runtime_error(make_message(node, eig, eps_pd)), node_(node), eigenvalue_(eig) {}

  Eigen::Index node() const { return node_; }
  double eigenvalue() const { return eigenvalue_; }

 private:
  static std::string make_message(Eigen::Index node, double eig, double eps_pd) {
    std::ostringstream os;
    os << "metric is not Kahler: min eigenvalue " << eig << " <= " << eps_pd << " at node "
       << node;
    return os.str();
  }
  Eigen::Index node_;
  double eigenvalue_;
};

/// The metric g = I + Hess(u) of a torus-invariant Kahler potential,
/// with its determinant and inverse at every node.
template <typename Scalar = double>
struct HessianMetric {
  Field<Scalar> potential;
  SymmetricMatrixField<Scalar> g;
  ArrayX<Scalar> det_g;
  SymmetricMatrixField<Scalar> inv_g;
  Scalar min_eig = std::numeric_limits<Scalar>::quiet_NaN(); ///< over all nodes

  const GridSpec& grid() const { return potential.grid; }
};

inline constexpr double kDefaultEpsPd = 1e-8;

namespace detail {

template <typename Scalar>
HessianMetric<Scalar> finish_metric(Field<Scalar> u, SymmetricMatrixField<Scalar> g,
                                    Scalar eps_pd) {
  HessianMetric<Scalar> m;
  ArrayX<Scalar> eigs = g.min_eigenvalue();
  Eigen::Index worst;
  m.min_eig = eigs.minCoeff(&worst);
  if (!(m.min_eig > eps_pd)) throw NotKahlerError(worst, double(m.min_eig), double(eps_pd));
  m.det_g = g.det();
  m.inv_g.grid = g.grid;
  if (g.grid.n == 1) {
    m.inv_g.xx = m.det_g.inverse();
  } else {
    m.inv_g.xx = g.yy / m.det_g;
    m.inv_g.xy = -g.xy / m.det_g;
    m.inv_g.yy = g.xx / m.det_g;
  }
  m.potential = std::move(u);
  m.g = std::move(g);
  return m;
}

} // namespace detail

/// Build the Hessian metric of a potential.  Throws NotKahlerError when
/// I + Hess(u) fails to be positive definite beyond eps_pd.
template <typename Scalar>
HessianMetric<Scalar> hessian_metric(const Field<Scalar>& u,
                                     Scalar eps_pd = Scalar(kDefaultEpsPd)) {
  auto g = SymmetricMatrixField<Scalar>::shifted_hessian(u, Scalar(1));
  return detail::finish_metric(u, std::move(g), eps_pd);
}

/// Metric from an explicitly given matrix field (synthetic backgrounds,
/// constant-coefficient cases).  The potential is recorded as zero.
template <typename Scalar>
HessianMetric<Scalar> metric_from_matrix_field(SymmetricMatrixField<Scalar> g,
                                               Scalar eps_pd = Scalar(kDefaultEpsPd)) {
  return detail::finish_metric(Field<Scalar>::zero(g.grid), std::move(g), eps_pd);
}

/// Laplace operator of the metric applied to an invariant function:
/// g^{jk} d_j d_k f.
template <typename Scalar>
Field<Scalar> laplacian(const HessianMetric<Scalar>& m, const Field<Scalar>& f) {
  require_same_grid(m.grid(), f.grid, "laplacian");
  auto hess = SymmetricMatrixField<Scalar>::shifted_hessian(f, Scalar(0));
  return Field<Scalar>(f.grid, m.inv_g.contract(hess));
}

/// tr_{omega_v} omega_u as a grid function: g_v^{jk} (g_u)_{jk}.
/// Equals n when both metrics coincide.
template <typename Scalar>
Field<Scalar> trace(const HessianMetric<Scalar>& m_v, const HessianMetric<Scalar>& m_u) {
  require_same_grid(m_v.grid(), m_u.grid(), "trace");
  return Field<Scalar>(m_v.grid(), m_v.inv_g.contract(m_u.g));
}

/// log of the volume density, log det g.
template <typename Scalar>
Field<Scalar> log_density(const HessianMetric<Scalar>& m) {
  return Field<Scalar>(m.grid(), m.det_g.log());
}

/// Scalar curvature on the flat torus: R = -Delta_g log det g.  Its
/// det-weighted integral vanishes (total scalar curvature is
/// cohomological).
template <typename Scalar>
Field<Scalar> scalar_curvature(const HessianMetric<Scalar>& m,
                               const BackgroundGeometry<Scalar>& bg) {
  require_same_grid(m.grid(), bg.grid, "scalar_curvature");
  Field<Scalar> r = laplacian(m, log_density(m));
  r.values = -r.values;
  return r;
}

} // namespace csck
