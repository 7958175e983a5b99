/// @file quadrature.cpp
/// @brief Newton-iteration construction of the 1D rules.

#include "quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace dgns {

// Legendre polynomial P_n and derivative at t in [-1,1] via the three-term
// recurrence.
static void legendre(int n, double t, double& p, double& dp) {
  double p0 = 1.0, p1 = t;
  if (n == 0) { p = 1.0; dp = 0.0; return; }
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = n * (t * p1 - p0) / (t * t - 1.0);
}

Quad1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1");
  Quad1D q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    // Chebyshev-like initial guess, then Newton on P_n.
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p, dp;
    for (int it = 0; it < 100; ++it) {
      legendre(n, t, p, dp);
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    legendre(n, t, p, dp);
    // Map from [-1,1] to [0,1]; reverse index order so points increase.
    q.x[n - 1 - i] = 0.5 * (t + 1.0);
    q.w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  return q;
}

std::vector<double> gauss_lobatto_points(int n) {
  if (n < 2) throw std::invalid_argument("gauss_lobatto_points: need n >= 2");
  std::vector<double> x(n);
  x[0] = 0.0;
  x[n - 1] = 1.0;
  const int m = n - 1;  // interior points are roots of P'_m
  for (int i = 1; i < m; ++i) {
    // Initial guess: Chebyshev-Lobatto point, then Newton on P'_m using the
    // identity (1-t^2) P''_m = 2 t P'_m - m(m+1) P_m.
    double t = std::cos(M_PI * (m - i) / m);
    for (int it = 0; it < 100; ++it) {
      double p, dp;
      legendre(m, t, p, dp);
      const double d2p = (2.0 * t * dp - m * (m + 1.0) * p) / (1.0 - t * t);
      const double dt = dp / d2p;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[i] = 0.5 * (t + 1.0);
  }
  return x;
}

template <int dim>
QuadCell<dim> tensor_quadrature(int n1d) {
  const Quad1D q1 = gauss_legendre(n1d);
  QuadCell<dim> q;
  q.n1d = n1d;
  int n = 1;
  for (int d = 0; d < dim; ++d) n *= n1d;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    int rem = i;
    double w = 1.0;
    for (int d = 0; d < dim; ++d) {
      const int id = rem % n1d;
      rem /= n1d;
      q.x[i][d] = q1.x[id];
      w *= q1.w[id];
    }
    q.w[i] = w;
  }
  return q;
}

template QuadCell<1> tensor_quadrature<1>(int);
template QuadCell<2> tensor_quadrature<2>(int);
template QuadCell<3> tensor_quadrature<3>(int);

} // namespace dgns
