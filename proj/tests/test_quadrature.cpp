/// @file test_quadrature.cpp
/// @brief Quadrature exactness and nodal-basis identities, each checked
///        against values computed independently (closed-form integrals,
///        known node sets, polynomial interpolation).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lagrange.hpp"
#include "quadrature.hpp"

#include <cmath>
#include <vector>

using namespace dgns;

// =============================================================================
// Gauss-Legendre
// =============================================================================

TEST_CASE("gauss-legendre integrates monomials of degree <= 2n-1 exactly") {
  for (int n = 1; n <= 10; ++n) {
    const Quad1D q = gauss_legendre(n);
    REQUIRE(static_cast<int>(q.x.size()) == n);

    double wsum = 0.0;
    for (double w : q.w) wsum += w;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));

    for (int i = 1; i < n; ++i) CHECK(q.x[i] > q.x[i - 1]);  // ascending
    for (double x : q.x) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }

    for (int k = 0; k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += q.w[i] * std::pow(q.x[i], k);
      CHECK(s == doctest::Approx(1.0 / (k + 1)).epsilon(1e-13));
    }
    // ... and fails on degree 2n (sanity that the rule is not accidentally
    // super-exact, which would indicate duplicated points).
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += q.w[i] * std::pow(q.x[i], 2 * n);
    CHECK(std::abs(s - 1.0 / (2 * n + 1)) > 1e-12);
  }
}

TEST_CASE("gauss-legendre matches tabulated 3-point rule") {
  // Classical values on [-1,1]: points {-sqrt(3/5), 0, sqrt(3/5)},
  // weights {5/9, 8/9, 5/9}; mapped to [0,1].
  const Quad1D q = gauss_legendre(3);
  const double r = std::sqrt(3.0 / 5.0);
  CHECK(q.x[0] == doctest::Approx(0.5 * (1.0 - r)).epsilon(1e-15));
  CHECK(q.x[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(q.x[2] == doctest::Approx(0.5 * (1.0 + r)).epsilon(1e-15));
  CHECK(q.w[0] == doctest::Approx(5.0 / 18.0).epsilon(1e-15));
  CHECK(q.w[1] == doctest::Approx(8.0 / 18.0).epsilon(1e-15));
  CHECK(q.w[2] == doctest::Approx(5.0 / 18.0).epsilon(1e-15));
}

// =============================================================================
// Gauss-Lobatto points
// =============================================================================

TEST_CASE("gauss-lobatto point sets") {
  for (int n = 2; n <= 8; ++n) {
    const auto x = gauss_lobatto_points(n);
    REQUIRE(static_cast<int>(x.size()) == n);
    CHECK(x.front() == 0.0);
    CHECK(x.back() == 1.0);
    for (int i = 1; i < n; ++i) CHECK(x[i] > x[i - 1]);
    for (int i = 0; i < n; ++i)  // symmetric about 1/2
      CHECK(x[i] == doctest::Approx(1.0 - x[n - 1 - i]).epsilon(1e-14));
  }
  // Known interior nodes.
  const auto x3 = gauss_lobatto_points(3);
  CHECK(x3[1] == doctest::Approx(0.5).epsilon(1e-15));
  const auto x4 = gauss_lobatto_points(4);  // interior at (1 -/+ 1/sqrt(5))/2
  CHECK(x4[1] == doctest::Approx(0.5 * (1.0 - 1.0 / std::sqrt(5.0))).epsilon(1e-14));
  CHECK(x4[2] == doctest::Approx(0.5 * (1.0 + 1.0 / std::sqrt(5.0))).epsilon(1e-14));
  const auto x5 = gauss_lobatto_points(5);  // interior at (1 -/+ sqrt(3/7))/2
  CHECK(x5[1] == doctest::Approx(0.5 * (1.0 - std::sqrt(3.0 / 7.0))).epsilon(1e-14));
  CHECK(x5[2] == doctest::Approx(0.5).epsilon(1e-14));
}

// =============================================================================
// Tensor quadrature
// =============================================================================

TEST_CASE("tensor quadrature: ordering and separable exactness") {
  SUBCASE("2d") {
    const auto q = tensor_quadrature<2>(3);
    REQUIRE(static_cast<int>(q.x.size()) == 9);
    CHECK(q.n1d == 3);
    // Lexicographic, x fastest: the first three points share x-ordering and y.
    CHECK(q.x[1][1] == q.x[0][1]);
    CHECK(q.x[1][0] > q.x[0][0]);
    CHECK(q.x[3][1] > q.x[0][1]);

    // integral of x^3 y^4 over [0,1]^2 = 1/20
    double s = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i)
      s += q.w[i] * std::pow(q.x[i][0], 3) * std::pow(q.x[i][1], 4);
    CHECK(s == doctest::Approx(1.0 / 20.0).epsilon(1e-14));
  }
  SUBCASE("3d") {
    const auto q = tensor_quadrature<3>(4);
    REQUIRE(static_cast<int>(q.x.size()) == 64);
    double s = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i) {
      wsum += q.w[i];
      s += q.w[i] * std::pow(q.x[i][0], 7) * std::pow(q.x[i][1], 2) * std::pow(q.x[i][2], 5);
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s == doctest::Approx(1.0 / (8.0 * 3.0 * 6.0)).epsilon(1e-13));
  }
}

// =============================================================================
// 1D Lagrange basis
// =============================================================================

TEST_CASE("lagrange basis: kronecker property and partition of unity") {
  for (int n = 2; n <= 6; ++n) {
    const Lagrange1D basis(gauss_lobatto_points(n));
    std::vector<double> v(n);

    for (int j = 0; j < n; ++j) {
      basis.values(basis.nodes[j], v.data());
      for (int i = 0; i < n; ++i) CHECK(v[i] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
    }

    for (double t : {0.0, 0.123456, 0.5, 0.98765, 1.0}) {
      basis.values(t, v.data());
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += v[i];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-13));

      basis.derivatives(t, v.data());
      s = 0.0;
      for (int i = 0; i < n; ++i) s += v[i];
      CHECK(s == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("lagrange basis reproduces polynomials and their derivatives") {
  // Interpolating t -> t^k at the nodes must give back value and derivative
  // exactly for k < n.
  const int n = 5;
  const Lagrange1D basis(gauss_lobatto_points(n));
  std::vector<double> v(n), d(n);
  for (int k = 0; k < n; ++k) {
    for (double t : {0.07, 0.31, 0.5, 0.77, 1.0}) {
      basis.values(t, v.data());
      basis.derivatives(t, d.data());
      double val = 0.0, der = 0.0;
      for (int i = 0; i < n; ++i) {
        val += v[i] * std::pow(basis.nodes[i], k);
        der += d[i] * std::pow(basis.nodes[i], k);
      }
      CHECK(val == doctest::Approx(std::pow(t, k)).epsilon(1e-12));
      const double dexact = k == 0 ? 0.0 : k * std::pow(t, k - 1);
      CHECK(der == doctest::Approx(dexact).scale(1.0).epsilon(1e-11));
    }
  }
}

// =============================================================================
// Tensor-product basis tables
// =============================================================================

TEST_CASE("tabulated tensor basis reproduces a polynomial field") {
  const int k = 3;  // Q3
  const Lagrange1D basis(gauss_lobatto_points(k + 1));

  SUBCASE("2d") {
    const auto q = tensor_quadrature<2>(k + 2);
    const auto tab = tabulate_basis<2>(basis, q.x);
    REQUIRE(tab.nb == (k + 1) * (k + 1));
    REQUIRE(tab.nq == static_cast<int>(q.x.size()));

    auto f = [](double x, double y) { return (1.0 + 2.0 * x - x * x * x) * (0.5 - y + y * y); };
    auto fx = [](double x, double y) { return (2.0 - 3.0 * x * x) * (0.5 - y + y * y); };
    auto fy = [](double x, double y) { return (1.0 + 2.0 * x - x * x * x) * (-1.0 + 2.0 * y); };

    // Coefficients = nodal values (lexicographic, x fastest).
    std::vector<double> c(tab.nb);
    for (int j = 0, i = 0; j <= k; ++j)
      for (int l = 0; l <= k; ++l, ++i) c[i] = f(basis.nodes[l], basis.nodes[j]);

    for (int qp = 0; qp < tab.nq; ++qp) {
      double val = 0.0, gx = 0.0, gy = 0.0;
      for (int i = 0; i < tab.nb; ++i) {
        val += c[i] * tab.val[static_cast<std::size_t>(i) * tab.nq + qp];
        gx += c[i] * tab.der[0][static_cast<std::size_t>(i) * tab.nq + qp];
        gy += c[i] * tab.der[1][static_cast<std::size_t>(i) * tab.nq + qp];
      }
      CHECK(val == doctest::Approx(f(q.x[qp][0], q.x[qp][1])).epsilon(1e-12));
      CHECK(gx == doctest::Approx(fx(q.x[qp][0], q.x[qp][1])).scale(1.0).epsilon(1e-11));
      CHECK(gy == doctest::Approx(fy(q.x[qp][0], q.x[qp][1])).scale(1.0).epsilon(1e-11));
    }
  }

  SUBCASE("3d") {
    const auto q = tensor_quadrature<3>(k + 1);
    const auto tab = tabulate_basis<3>(basis, q.x);
    REQUIRE(tab.nb == (k + 1) * (k + 1) * (k + 1));

    auto f = [](const std::array<double, 3>& p) { return p[0] * p[0] * p[1] + 3.0 * p[2] * p[2] * p[2] - p[0] * p[1] * p[2]; };
    auto g1 = [](const std::array<double, 3>& p) { return p[0] * p[0] - p[0] * p[2]; };

    std::vector<double> c(tab.nb);
    for (int mz = 0, i = 0; mz <= k; ++mz)
      for (int my = 0; my <= k; ++my)
        for (int mx = 0; mx <= k; ++mx, ++i)
          c[i] = f({basis.nodes[mx], basis.nodes[my], basis.nodes[mz]});

    for (int qp = 0; qp < tab.nq; ++qp) {
      double val = 0.0, gy = 0.0;
      for (int i = 0; i < tab.nb; ++i) {
        val += c[i] * tab.val[static_cast<std::size_t>(i) * tab.nq + qp];
        gy += c[i] * tab.der[1][static_cast<std::size_t>(i) * tab.nq + qp];
      }
      CHECK(val == doctest::Approx(f(q.x[qp])).scale(1.0).epsilon(1e-12));
      CHECK(gy == doctest::Approx(g1(q.x[qp])).scale(1.0).epsilon(1e-11));
    }
  }
}
