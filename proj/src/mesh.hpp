/// @file mesh.hpp
/// @brief Quadrilateral/hexahedral meshes with refinement hierarchy and full
///        face connectivity.
///
/// Conventions:
///  * Cell vertices are numbered lexicographically: v = ix + 2*iy (+ 4*iz)
///    over the reference cell [0,1]^dim.
///  * Local faces are numbered 2*axis + side (side 0 = low coordinate), so
///    2D: 0 = x-, 1 = x+, 2 = y-, 3 = y+.
///  * A face's own parameter domain is [0,1]^{dim-1} with tangent directions
///    equal to the remaining axes in increasing order.
///  * Refinement is isotropic (2^dim children); the active mesh is kept
///    1-irregular.  Hanging faces are stored fine-side (one record per
///    subface) and carry an affine embedding of the subface into the coarse
///    neighbor's reference cell.

#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dgns {

/// Affine embedding of a face parameter domain into a cell reference cell:
/// ref(u) = origin + sum_t u[t] * tangent[t].
template <int dim>
struct FaceEmbedding {
  std::array<double, dim> origin{};
  std::array<std::array<double, dim>, dim == 1 ? 1 : dim - 1> tangent{};

  std::array<double, dim> map(const std::array<double, dim == 1 ? 1 : dim - 1>& u) const {
    std::array<double, dim> r = origin;
    for (int t = 0; t < (dim == 1 ? 1 : dim - 1); ++t)
      for (int d = 0; d < dim; ++d) r[d] += u[t] * tangent[t][d];
    return r;
  }
};

/// One face of the active mesh.  Interior conforming faces are recorded once
/// (owner = lower active index); hanging faces are recorded once per subface
/// with the fine cell as owner and the coarse cell as neighbor.
template <int dim>
struct FaceInfo {
  int cell_in = -1;   ///< owner cell (mesh cell index)
  int face_in = -1;   ///< owner local face
  int cell_out = -1;  ///< neighbor cell, -1 on boundary
  int face_out = -1;  ///< neighbor local face, -1 on boundary
  int boundary_id = -1;
  bool hanging = false;
  FaceEmbedding<dim> emb_in;   ///< face params -> owner reference coords
  FaceEmbedding<dim> emb_out;  ///< face params -> neighbor reference coords (interior only)
  double diam = 0.0;           ///< max corner-pair distance of the (sub)face
  double measure = 0.0;        ///< length/area of the (sub)face from its corners
};

template <int dim>
struct FaceList {
  std::vector<FaceInfo<dim>> interior;
  std::vector<FaceInfo<dim>> boundary;
};

template <int dim>
class Mesh {
public:
  static constexpr int n_vertices_per_cell = 1 << dim;
  static constexpr int n_faces_per_cell = 2 * dim;
  static constexpr int n_children = 1 << dim;
  static constexpr int n_face_corners = 1 << (dim - 1);

  struct Cell {
    std::array<int, n_vertices_per_cell> v{};
    int level = 0;
    int parent = -1;
    int child_position = -1;  ///< lexicographic position within parent
    std::array<int, n_children> children;
    bool active = true;
    std::array<int, n_faces_per_cell> boundary_id;  ///< -1 when not on the boundary

    Cell() {
      children.fill(-1);
      boundary_id.fill(-1);
    }
    bool refined() const { return children[0] >= 0; }
  };

  std::vector<std::array<double, dim>> vertices;
  std::vector<Cell> cells;
  /// Optional boundary manifold: new refinement vertices created on a
  /// boundary face with this id are snapped (used for the cylinder circle).
  int snap_boundary_id = -1;
  std::function<std::array<double, dim>(const std::array<double, dim>&)> snap_fn;

  // -- active-cell indexing -------------------------------------------------
  const std::vector<int>& active_cells() const { return active_; }
  int n_active() const { return static_cast<int>(active_.size()); }
  int active_index(int cell) const { return active_index_[cell]; }

  // -- geometry -------------------------------------------------------------
  /// Multilinear reference-to-physical map of a cell.
  std::array<double, dim> map_point(int cell, const std::array<double, dim>& ref) const;
  /// Jacobian of the multilinear map at a reference point (column a = d x / d ref_a).
  std::array<std::array<double, dim>, dim> jacobian(int cell, const std::array<double, dim>& ref) const;
  /// Max inter-vertex distance of a cell.
  double cell_diam(int cell) const;
  /// Cell measure by quadrature of |det J|.
  double cell_measure(int cell) const;
  /// Sum of active cell measures.
  double total_measure() const;
  /// Throws if any active cell has a nonpositive Jacobian determinant.
  void check_jacobians() const;

  // -- topology -------------------------------------------------------------
  /// Rebuild active list and face connectivity (called by the generators and
  /// after refinement; cheap relative to any solve).
  void finalize();
  const FaceList<dim>& faces() const { return faces_; }

  /// Refine all active cells `rounds` times.
  void refine_globally(int rounds = 1);

  /// Refine `refine_set` (active cell indices), coarsen the sibling groups
  /// fully contained in `coarsen_set`.  Enforces 1-irregularity by growing
  /// the refine set; returns the number of extra cells refined by closure.
  int refine_and_coarsen(const std::vector<int>& refine_set, const std::vector<int>& coarsen_set);

  // -- helpers used by face construction & transfer -------------------------
  /// Same-level-or-coarser neighbor of `cell` across `face` inside the
  /// hierarchy.  Returns {-1,-1} on the domain boundary.  The returned cell
  /// may be inactive (refined further).
  std::pair<int, int> neighbor(int cell, int face) const;

  static int face_axis(int face) { return face / 2; }
  static int face_side(int face) { return face % 2; }
  /// Cell-vertex ordinal of face corner `c` (lexicographic in the face frame).
  static int face_corner_vertex(int face, int corner);
  /// Reference coordinates of a cell vertex.
  static std::array<double, dim> vertex_ref(int v);

private:
  std::vector<int> active_;
  std::vector<int> active_index_;
  FaceList<dim> faces_;
  /// Same-level neighbors of root cells: (cell, face) or (-1,-1).
  std::vector<std::array<std::pair<int, int>, n_faces_per_cell>> root_neighbor_;
  /// Dedup map for refinement vertices, keyed by the sorted ids of the
  /// corners they interpolate (pad with -1).
  std::map<std::array<int, 4>, int> midpoint_cache_;

  void refine_cell(int cell);
  void build_root_neighbors();
  void build_faces();
};

// ---------------------------------------------------------------------------
// Generators, distortion, I/O
// ---------------------------------------------------------------------------

template <int dim>
Mesh<dim> generate_cartesian(int n_el, const std::array<double, dim>& lo, const std::array<double, dim>& hi);

/// Deterministically displace interior vertices by iid uniform offsets in
/// [-amplitude, amplitude]^dim.  Boundary vertices stay put; tangled cells
/// are rejected with a diagnostic.
template <int dim>
void distort(Mesh<dim>& mesh, double amplitude, unsigned seed);

/// Block-structured mesh of the 2.2 x 0.41 channel with a diameter-0.1
/// cylinder centered at (0.2, 0.2).  Base mesh has 92 cells; each level
/// quadruples the count (level 4 gives 23552).  Boundary ids:
/// 0 = walls, 1 = inlet, 2 = outlet, 3 = cylinder.
Mesh<2> generate_cylinder_channel(int level);

template <int dim>
std::string export_text(const Mesh<dim>& mesh);

template <int dim>
Mesh<dim> import_text(const std::string& text);

/// Reads the header of a mesh file to learn its dimension.
int mesh_file_dim(const std::string& text);

} // namespace dgns
