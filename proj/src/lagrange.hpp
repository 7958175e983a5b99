/// @file lagrange.hpp
/// @brief 1D Lagrange bases on arbitrary node sets (barycentric form) and
///        tensor-product evaluation tables.

#pragma once

#include <array>
#include <vector>

namespace dgns {

/// Lagrange basis over a fixed 1D node set in [0,1].
struct Lagrange1D {
  std::vector<double> nodes;
  std::vector<double> bary;  ///< barycentric weights

  explicit Lagrange1D(std::vector<double> n);
  int size() const { return static_cast<int>(nodes.size()); }

  /// Values of all basis functions at point t.
  void values(double t, double* out) const;
  /// Derivatives of all basis functions at point t.
  void derivatives(double t, double* out) const;
};

/// Tensor-product basis tables sampled at a list of dim-dimensional points.
/// value(i)[q] and grad(a,i)[q] are row-major [nb][nq] tables suitable for the
/// kern::contract_rows / kern::project_rows kernels.  Basis index i is
/// lexicographic (x fastest), matching the dof layout of FunctionSpace.
template <int dim>
struct BasisTable {
  int nb = 0;
  int nq = 0;
  std::vector<double> val;                   ///< [nb][nq]
  std::array<std::vector<double>, dim> der;  ///< reference-gradient tables

  const double* value_row(int i) const { return val.data() + static_cast<std::size_t>(i) * nq; }
  const double* value_data() const { return val.data(); }
  const double* der_data(int a) const { return der[a].data(); }
};

template <int dim>
BasisTable<dim> tabulate_basis(const Lagrange1D& basis,
                               const std::vector<std::array<double, dim>>& points);

} // namespace dgns
