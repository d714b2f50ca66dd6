#include "csck/metric.hpp"

#include "csck/random_fields.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace csck;
using oracle::kTwoPi;

namespace {
const double kPi2_4 = kTwoPi * kTwoPi; // 4 pi^2

Field<double> cosine_potential(GridSpec g, double eps) {
  // u with Hess(u) = eps*cos(2 pi x), so det g = 1 + eps cos(2 pi x) in n=1
  return Field<double>::from_function(
      g, [eps](double x, double) { return -eps * std::cos(kTwoPi * x) / kPi2_4; });
}
} // namespace

TEST_CASE("flat potential gives the identity metric") {
  for (int n : {1, 2}) {
    GridSpec g(n, 16);
    auto m = hessian_metric(Field<double>::zero(g));
    CHECK((m.det_g - 1.0).abs().maxCoeff() == 0.0);
    CHECK(m.min_eig == 1.0);
    if (n == 2) CHECK(m.g.xy.abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("one-mode potential has closed-form density") {
  GridSpec g(1, 64);
  auto m = hessian_metric(cosine_potential(g, 0.5));
  double err = oracle::max_node_error(
      Field<double>(g, m.det_g), [](double x, double) { return 1 + 0.5 * std::cos(kTwoPi * x); });
  CHECK(err < 1e-12);
}

TEST_CASE("potential outside the Kahler cone is rejected") {
  GridSpec g(1, 64);
  CHECK_THROWS_AS(hessian_metric(cosine_potential(g, 1.5)), NotKahlerError);
  try {
    hessian_metric(cosine_potential(g, 1.5));
  } catch (const NotKahlerError& e) {
    CHECK(e.eigenvalue() < 0);          // 1 + 1.5 cos changes sign
    CHECK(e.eigenvalue() > -0.6);       // min of 1 - 1.5
    CHECK(e.node() >= 0);
    CHECK(std::string(e.what()).find("not Kahler") != std::string::npos);
  }
}

TEST_CASE("laplacian: flat metric acts as the flat laplacian") {
  GridSpec g(1, 64);
  auto bg = BackgroundGeometry<double>::flat_torus(g);
  auto m = hessian_metric(Field<double>::zero(g));
  auto f = Field<double>::from_function(g, [](double x, double) { return std::cos(kTwoPi * x); });
  auto lap = laplacian(m, f);
  CHECK(oracle::max_node_error(lap, [](double x, double) {
          return -kPi2_4 * std::cos(kTwoPi * x);
        }) < 1e-10);

  auto c = Field<double>::from_function(g, [](double, double) { return -2.25; });
  CHECK(laplacian(hessian_metric(random_kahler_potential<double>(g, 5)), c).sup_norm() == 0.0);
}

TEST_CASE("laplacian: inverse-metric closed form in dimension one") {
  GridSpec g(1, 64);
  auto m = hessian_metric(cosine_potential(g, 0.5));
  auto f = Field<double>::from_function(g, [](double x, double) { return std::cos(kTwoPi * x); });
  auto lap = laplacian(m, f);
  CHECK(oracle::max_node_error(lap, [](double x, double) {
          return -kPi2_4 * std::cos(kTwoPi * x) / (1 + 0.5 * std::cos(kTwoPi * x));
        }) < 1e-10);
}

TEST_CASE("trace of a metric against itself is the dimension") {
  for (int n : {1, 2}) {
    GridSpec g(n, 32);
    auto u = random_kahler_potential<double>(g, 7 + n);
    auto m = hessian_metric(u);
    auto t = trace(m, m);
    CHECK((t.values - double(n)).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("trace agrees with the det-free formula in dimension one") {
  GridSpec g(1, 64);
  auto u = random_kahler_potential<double>(g, 21);
  auto v = random_kahler_potential<double>(g, 22);
  auto m_u = hessian_metric(u);
  auto m_v = hessian_metric(v);
  auto t = trace(m_v, m_u);
  ArrayX<double> direct = (1.0 + hessian_arrays(u)[0]) / (1.0 + hessian_arrays(v)[0]);
  CHECK((t.values - direct).abs().maxCoeff() < 1e-13);
}

TEST_CASE("trace of constant diagonal metrics") {
  GridSpec g(2, 16);
  auto gm = SymmetricMatrixField<double>::identity(g);
  gm.xx = ArrayX<double>::Constant(g.num_nodes(), 2.0); // g_u = diag(2, 1)
  auto m_u = metric_from_matrix_field(gm);
  auto m_v = metric_from_matrix_field(SymmetricMatrixField<double>::identity(g));
  auto t = trace(m_v, m_u);
  CHECK((t.values - 3.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("scalar curvature of the flat metric vanishes") {
  GridSpec g(2, 16);
  auto bg = BackgroundGeometry<double>::flat_torus(g);
  CHECK(scalar_curvature(hessian_metric(Field<double>::zero(g)), bg).sup_norm() == 0.0);
}

TEST_CASE("scalar curvature against the symbolic one-mode oracle") {
  GridSpec g(1, 64);
  auto bg = BackgroundGeometry<double>::flat_torus(g);
  const double eps = 0.3;
  auto m = hessian_metric(cosine_potential(g, eps));
  auto R = scalar_curvature(m, bg);
  // R = -(log gdet)'' / gdet with gdet = 1 + eps cos(2 pi x); at x = 0 the
  // derivative term (g'/g)^2 vanishes, so R(0) = 4 pi^2 eps / (1+eps)^2.
  const double expect = kPi2_4 * eps / ((1 + eps) * (1 + eps));
  CHECK(std::abs(R.values(0) - expect) < 1e-9);
}

TEST_CASE("total scalar curvature is cohomological") {
  for (int n : {1, 2}) {
    GridSpec g(n, n == 1 ? 64 : 32);
    auto bg = BackgroundGeometry<double>::flat_torus(g);
    for (std::uint64_t seed : {101, 102, 103}) {
      auto m = hessian_metric(random_kahler_potential<double>(g, seed));
      auto R = scalar_curvature(m, bg);
      double total = (R.values * m.det_g).sum() * g.node_weight();
      CHECK(std::abs(total) < 1e-10);
    }
  }
}

TEST_CASE("metric inverse and mass conservation") {
  for (int n : {1, 2}) {
    GridSpec g(n, 32);
    for (std::uint64_t seed : {31, 32, 33}) {
      auto m = hessian_metric(random_kahler_potential<double>(g, seed));
      if (n == 1) {
        CHECK((m.inv_g.xx * m.g.xx - 1.0).abs().maxCoeff() < 1e-12);
      } else {
        CHECK((m.inv_g.xx * m.g.xx + m.inv_g.xy * m.g.xy - 1.0).abs().maxCoeff() < 1e-12);
        CHECK((m.inv_g.xy * m.g.xx + m.inv_g.yy * m.g.xy).abs().maxCoeff() < 1e-12);
        CHECK((m.inv_g.xy * m.g.xy + m.inv_g.yy * m.g.yy - 1.0).abs().maxCoeff() < 1e-12);
      }
      CHECK(std::abs(m.det_g.sum() * g.node_weight() - 1.0) < 1e-10);
      CHECK((m.det_g - m.g.det()).abs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("mixed determinant is the polarization of det") {
  GridSpec g(2, 16);
  auto A = SymmetricMatrixField<double>::shifted_hessian(random_kahler_potential<double>(g, 1), 1.0);
  auto B = SymmetricMatrixField<double>::shifted_hessian(random_kahler_potential<double>(g, 2), 1.0);
  CHECK((mixed_det(A, A) - A.det()).abs().maxCoeff() < 1e-13);
  CHECK((mixed_det(A, B) - mixed_det(B, A)).abs().maxCoeff() == 0.0);
  auto AB = A + B;
  CHECK((AB.det() - (A.det() + 2.0 * mixed_det(A, B) + B.det())).abs().maxCoeff() < 1e-12);
}
