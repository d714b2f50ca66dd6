#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace csck {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ArrayXc = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>;

/// Uniform periodic grid on the unit n-torus (period 1 per axis), N nodes
/// per axis, spacing h = 1/N.  Total volume of the background form is 1.
struct GridSpec {
  int n = 1;  ///< torus dimension, 1 or 2
  int N = 64; ///< nodes per axis, power of two, >= 8

  GridSpec() = default;
  GridSpec(int n_, int N_) : n(n_), N(N_) {
    if (n != 1 && n != 2)
      throw std::invalid_argument("GridSpec: n must be 1 or 2, got " + std::to_string(n));
    if (N < 8 || (N & (N - 1)) != 0)
      throw std::invalid_argument("GridSpec: N must be a power of two >= 8, got " +
                                  std::to_string(N));
  }

  double spacing() const { return 1.0 / N; }
  Eigen::Index num_nodes() const {
    return n == 1 ? Eigen::Index(N) : Eigen::Index(N) * N;
  }
  /// Quadrature weight h^n of one node.
  double node_weight() const { return std::pow(1.0 / N, n); }

  bool operator==(const GridSpec&) const = default;
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b))
    throw std::invalid_argument(std::string(what) + ": grids differ (n=" +
                                std::to_string(a.n) + ",N=" + std::to_string(a.N) + " vs n=" +
                                std::to_string(b.n) + ",N=" + std::to_string(b.N) + ")");
}

/// Periodic real-valued grid function (a Kahler potential or any scalar
/// quantity).  Values are stored flat; for n = 2 the layout is row-major,
/// values[i*N + j] at node (x, y) = (i*h, j*h).
template <typename Scalar = double>
struct Field {
  GridSpec grid;
  ArrayX<Scalar> values;

  Field() = default;
  Field(GridSpec g, ArrayX<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.num_nodes())
      throw std::invalid_argument("Field: value count does not match grid");
  }

  static Field zero(GridSpec g) { return Field(g, ArrayX<Scalar>::Zero(g.num_nodes())); }

  /// Sample a function of the node coordinates.  For n = 1 the second
  /// argument is always 0.
  template <typename F>
  static Field from_function(GridSpec g, F&& f) {
    ArrayX<Scalar> v(g.num_nodes());
    const Scalar h = Scalar(1) / g.N;
    if (g.n == 1) {
      for (int i = 0; i < g.N; ++i) v(i) = f(i * h, Scalar(0));
    } else {
      for (int i = 0; i < g.N; ++i)
        for (int j = 0; j < g.N; ++j) v(Eigen::Index(i) * g.N + j) = f(i * h, j * h);
    }
    return Field(g, std::move(v));
  }

  Scalar sup_norm() const { return values.abs().maxCoeff(); }
  bool all_finite() const { return values.isFinite().all(); }

  Field& operator+=(const Field& o) {
    require_same_grid(grid, o.grid, "Field +=");
    values += o.values;
    return *this;
  }
  Field& operator-=(const Field& o) {
    require_same_grid(grid, o.grid, "Field -=");
    values -= o.values;
    return *this;
  }
  Field& operator*=(Scalar s) {
    values *= s;
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(Scalar s, Field a) { return a *= s; }
  friend Field operator*(Field a, Scalar s) { return a *= s; }
};

/// Spectrally exact quadrature on the periodic grid: sum of nodal values
/// times h^n.  Exact for trigonometric polynomials below Nyquist.
template <typename Scalar>
Scalar integrate(const Field<Scalar>& f) {
  return f.values.sum() * Scalar(f.grid.node_weight());
}

/// Mean value; equals integrate since V = 1.
template <typename Scalar>
Scalar mean(const Field<Scalar>& f) {
  return integrate(f);
}

template <typename Scalar>
Field<Scalar> mean_zero(Field<Scalar> f) {
  f.values -= f.values.mean();
  return f;
}

/// Background geometry of the flat torus: Ric(omega) = 0, mean scalar
/// curvature 0, unit volume.
template <typename Scalar = double>
struct BackgroundGeometry {
  GridSpec grid;
  Field<Scalar> ricci_potential; ///< identically zero on the flat torus
  Scalar R_bar = Scalar(0);
  Scalar V = Scalar(1);

  static BackgroundGeometry flat_torus(GridSpec g) {
    return BackgroundGeometry{g, Field<Scalar>::zero(g), Scalar(0), Scalar(1)};
  }
};

} // namespace csck
