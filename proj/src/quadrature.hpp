/// @file quadrature.hpp
/// @brief 1D Gauss-Legendre / Gauss-Lobatto rules and their tensorization.

#pragma once

#include <array>
#include <vector>

namespace dgns {

/// 1D quadrature rule on the reference interval [0,1].
struct Quad1D {
  std::vector<double> x;  ///< points
  std::vector<double> w;  ///< weights (sum to 1)
};

/// Gauss-Legendre rule with n points on [0,1]; exact for degree <= 2n-1.
Quad1D gauss_legendre(int n);

/// Gauss-Lobatto point set with n points on [0,1] (includes the endpoints).
/// Used as the nodal basis support, not for integration.
std::vector<double> gauss_lobatto_points(int n);

/// Tensor-product quadrature on the reference cell [0,1]^dim, lexicographic
/// point ordering (x fastest).
template <int dim>
struct QuadCell {
  std::vector<std::array<double, dim>> x;
  std::vector<double> w;
  int n1d = 0;
};

template <int dim>
QuadCell<dim> tensor_quadrature(int n1d);

} // namespace dgns
