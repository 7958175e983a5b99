/// @file lagrange.cpp

#include "lagrange.hpp"

#include <cmath>
#include <stdexcept>

namespace dgns {

Lagrange1D::Lagrange1D(std::vector<double> n) : nodes(std::move(n)) {
  const int m = size();
  bary.assign(m, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (j != i) bary[i] /= (nodes[i] - nodes[j]);
}

void Lagrange1D::values(double t, double* out) const {
  const int m = size();
  // Exact-hit fast path keeps nodal interpolation exact.
  for (int i = 0; i < m; ++i) {
    if (t == nodes[i]) {
      for (int j = 0; j < m; ++j) out[j] = (j == i) ? 1.0 : 0.0;
      return;
    }
  }
  // l(t) * w_i / (t - x_i), with l(t) = prod (t - x_j).
  double l = 1.0;
  for (int j = 0; j < m; ++j) l *= (t - nodes[j]);
  for (int i = 0; i < m; ++i) out[i] = l * bary[i] / (t - nodes[i]);
}

void Lagrange1D::derivatives(double t, double* out) const {
  const int m = size();
  // Differentiate the product form directly: phi_i(t) = w_i * prod_{j!=i}(t-x_j),
  // phi_i'(t) = w_i * sum_{k!=i} prod_{j!=i,k}(t-x_j).  O(m^2), m is tiny.
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int k = 0; k < m; ++k) {
      if (k == i) continue;
      double p = 1.0;
      for (int j = 0; j < m; ++j) {
        if (j == i || j == k) continue;
        p *= (t - nodes[j]);
      }
      s += p;
    }
    out[i] = bary[i] * s;
  }
}

template <int dim>
BasisTable<dim> tabulate_basis(const Lagrange1D& basis,
                               const std::vector<std::array<double, dim>>& points) {
  const int m = basis.size();
  int nb = 1;
  for (int d = 0; d < dim; ++d) nb *= m;
  const int nq = static_cast<int>(points.size());

  BasisTable<dim> T;
  T.nb = nb;
  T.nq = nq;
  T.val.assign(static_cast<std::size_t>(nb) * nq, 0.0);
  for (int a = 0; a < dim; ++a) T.der[a].assign(static_cast<std::size_t>(nb) * nq, 0.0);

  std::vector<double> v(static_cast<std::size_t>(dim) * m), g(static_cast<std::size_t>(dim) * m);
  for (int q = 0; q < nq; ++q) {
    for (int d = 0; d < dim; ++d) {
      basis.values(points[q][d], v.data() + static_cast<std::size_t>(d) * m);
      basis.derivatives(points[q][d], g.data() + static_cast<std::size_t>(d) * m);
    }
    for (int i = 0; i < nb; ++i) {
      int rem = i;
      double val = 1.0;
      std::array<double, dim> der;
      der.fill(1.0);
      for (int d = 0; d < dim; ++d) {
        const int id = rem % m;
        rem /= m;
        const double vi = v[static_cast<std::size_t>(d) * m + id];
        const double gi = g[static_cast<std::size_t>(d) * m + id];
        val *= vi;
        for (int a = 0; a < dim; ++a) der[a] *= (a == d) ? gi : vi;
      }
      T.val[static_cast<std::size_t>(i) * nq + q] = val;
      for (int a = 0; a < dim; ++a) T.der[a][static_cast<std::size_t>(i) * nq + q] = der[a];
    }
  }
  return T;
}

template BasisTable<1> tabulate_basis<1>(const Lagrange1D&, const std::vector<std::array<double, 1>>&);
template BasisTable<2> tabulate_basis<2>(const Lagrange1D&, const std::vector<std::array<double, 2>>&);
template BasisTable<3> tabulate_basis<3>(const Lagrange1D&, const std::vector<std::array<double, 3>>&);

} // namespace dgns
