/// @file space.hpp
/// @brief Discontinuous tensor-product polynomial spaces on a mesh, plus the
///        geometry caches the matrix-free operators run on.
///
/// Dof layout: cell-contiguous and component-blocked,
///     dof = active_cell_index * (n_comp * nb) + comp * nb + node,
/// with `node` the lexicographic tensor index of a Gauss-Lobatto nodal point
/// (x fastest).  Fields are plain std::vector<double> in this layout.

#pragma once

#include "lagrange.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <vector>

namespace dgns {

using Field = std::vector<double>;

/// Per-cell geometry sampled at a tensor quadrature rule.
template <int dim>
struct CellGeometry {
  std::vector<double> detJw;                ///< [nq] Jacobian determinant * weight
  std::vector<double> Jinv;                 ///< [nq][dim][dim] row-major inverse Jacobian
  std::vector<std::array<double, dim>> xq;  ///< [nq] physical points
};

/// Per-face geometry sampled at a tensor face rule (owner-side orientation).
template <int dim>
struct FaceGeometry {
  std::vector<double> w_ds;                 ///< [nq] surface element * weight
  std::vector<std::array<double, dim>> n;   ///< [nq] unit normal, owner -> neighbor/outward
  std::vector<std::array<double, dim>> xq;  ///< [nq] physical points
  std::vector<double> Jinv_in;              ///< [nq][dim][dim]
  std::vector<double> Jinv_out;             ///< [nq][dim][dim]; empty on boundary faces
};

/// Mesh-derived quadrature geometry, built lazily per 1D rule size and shared
/// by all spaces on the mesh.
template <int dim>
class GeometryCache {
public:
  explicit GeometryCache(const Mesh<dim>& mesh);

  const Mesh<dim>& mesh() const { return *mesh_; }

  /// Geometry of all active cells (indexed by active cell index).
  const std::vector<CellGeometry<dim>>& cells(int n1d) const;
  /// Geometry of the interior/boundary face lists (parallel to mesh.faces()).
  const std::vector<FaceGeometry<dim>>& interior_faces(int n1d) const;
  const std::vector<FaceGeometry<dim>>& boundary_faces(int n1d) const;

  const QuadCell<dim>& cell_rule(int n1d) const;
  const QuadCell<dim - 1>& face_rule(int n1d) const;

  double cell_diam(int active_idx) const { return diam_[active_idx]; }
  double cell_measure(int active_idx) const { return measure_[active_idx]; }
  double min_diam() const { return min_diam_; }
  double total_measure() const { return total_measure_; }

private:
  struct Bundle {
    QuadCell<dim> cell_rule;
    QuadCell<dim - 1> face_rule;
    std::vector<CellGeometry<dim>> cells;
    std::vector<FaceGeometry<dim>> interior;
    std::vector<FaceGeometry<dim>> boundary;
  };
  const Bundle& bundle(int n1d) const;

  const Mesh<dim>* mesh_;
  std::vector<double> diam_;
  std::vector<double> measure_;
  double min_diam_ = 0.0;
  double total_measure_ = 0.0;
  mutable std::map<int, std::unique_ptr<Bundle>> cache_;
};

/// Discontinuous Q_degree space with n_comp components.
template <int dim>
class FunctionSpace {
public:
  FunctionSpace(const Mesh<dim>& mesh, int degree, int n_comp);

  const Mesh<dim>& mesh() const { return *mesh_; }
  int degree() const { return degree_; }
  int n_comp() const { return n_comp_; }
  int nb() const { return nb_; }                       ///< scalar basis size per cell
  int cell_dofs() const { return n_comp_ * nb_; }
  int n_dofs() const { return mesh_->n_active() * cell_dofs(); }
  int offset(int active_idx) const { return active_idx * cell_dofs(); }

  const Lagrange1D& basis1d() const { return basis1d_; }
  /// Reference coordinates of the nodal points (lexicographic, x fastest).
  const std::vector<std::array<double, dim>>& nodes() const { return nodes_; }

  /// Basis values/gradients at the tensor rule of size n1d (shared by cells).
  const BasisTable<dim>& cell_table(int n1d) const;
  /// Basis values/gradients at a face rule mapped through an embedding.
  /// Cached per (rule, embedding); the reference is stable.
  const BasisTable<dim>& trace_table(int n1d, const FaceEmbedding<dim>& emb) const;

  /// Nodal interpolation; f writes n_comp values at a physical point.
  void interpolate(const std::function<void(const std::array<double, dim>&, double*)>& f,
                   Field& out) const;

  /// Evaluate all components at a physical point (lowest-active-index owner
  /// wins on cell boundaries).  Returns false if no cell contains x.
  bool evaluate(const Field& field, const std::array<double, dim>& x, double* out) const;

  /// Mean of component comp over the domain.
  double mean_value(const Field& field, const GeometryCache<dim>& geom, int comp = 0) const;
  /// Shift a one-component field to zero mean.
  void subtract_mean(Field& field, const GeometryCache<dim>& geom) const;

private:
  const Mesh<dim>* mesh_;
  int degree_;
  int n_comp_;
  int nb_;
  Lagrange1D basis1d_;
  std::vector<std::array<double, dim>> nodes_;

  mutable std::map<int, std::unique_ptr<BasisTable<dim>>> cell_tables_;
  using EmbKey = std::array<int, dim * dim>;
  mutable std::map<std::pair<int, EmbKey>, std::unique_ptr<BasisTable<dim>>> trace_tables_;
};

/// Newton inversion of the multilinear cell map.  Returns true when x lies in
/// cell (within tol in reference coordinates) and fills ref.
template <int dim>
bool locate_in_cell(const Mesh<dim>& mesh, int cell, const std::array<double, dim>& x,
                    std::array<double, dim>& ref, double tol = 1e-9);

} // namespace dgns
