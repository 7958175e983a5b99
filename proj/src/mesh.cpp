/// @file mesh.cpp

#include "mesh.hpp"

#include "quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dgns {

// ---------------------------------------------------------------------------
// Static reference-cell helpers
// ---------------------------------------------------------------------------
template <int dim>
std::array<double, dim> Mesh<dim>::vertex_ref(int v) {
  std::array<double, dim> r{};
  for (int d = 0; d < dim; ++d) r[d] = (v >> d) & 1;
  return r;
}

template <int dim>
int Mesh<dim>::face_corner_vertex(int face, int corner) {
  const int a = face_axis(face), s = face_side(face);
  int v = s << a;
  int t = 0;
  for (int d = 0; d < dim; ++d) {
    if (d == a) continue;
    v |= ((corner >> t) & 1) << d;
    ++t;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------
template <int dim>
std::array<double, dim> Mesh<dim>::map_point(int cell, const std::array<double, dim>& ref) const {
  const Cell& c = cells[cell];
  std::array<double, dim> x{};
  for (int v = 0; v < n_vertices_per_cell; ++v) {
    double s = 1.0;
    for (int d = 0; d < dim; ++d) s *= ((v >> d) & 1) ? ref[d] : (1.0 - ref[d]);
    for (int d = 0; d < dim; ++d) x[d] += s * vertices[c.v[v]][d];
  }
  return x;
}

template <int dim>
std::array<std::array<double, dim>, dim> Mesh<dim>::jacobian(int cell, const std::array<double, dim>& ref) const {
  const Cell& c = cells[cell];
  std::array<std::array<double, dim>, dim> J{};  // J[d][a] = d x_d / d ref_a
  for (int v = 0; v < n_vertices_per_cell; ++v) {
    for (int a = 0; a < dim; ++a) {
      double s = 1.0;
      for (int d = 0; d < dim; ++d) {
        if (d == a)
          s *= ((v >> d) & 1) ? 1.0 : -1.0;
        else
          s *= ((v >> d) & 1) ? ref[d] : (1.0 - ref[d]);
      }
      for (int d = 0; d < dim; ++d) J[d][a] += s * vertices[c.v[v]][d];
    }
  }
  return J;
}

template <int dim>
static double det(const std::array<std::array<double, dim>, dim>& J) {
  if constexpr (dim == 2) {
    return J[0][0] * J[1][1] - J[0][1] * J[1][0];
  } else {
    return J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
           J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
           J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
  }
}

template <int dim>
double Mesh<dim>::cell_diam(int cell) const {
  const Cell& c = cells[cell];
  double m = 0.0;
  for (int i = 0; i < n_vertices_per_cell; ++i)
    for (int j = i + 1; j < n_vertices_per_cell; ++j) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double e = vertices[c.v[i]][d] - vertices[c.v[j]][d];
        s += e * e;
      }
      m = std::max(m, s);
    }
  return std::sqrt(m);
}

template <int dim>
double Mesh<dim>::cell_measure(int cell) const {
  // |det J| is at most quadratic per reference direction for a multilinear
  // map, so a 2-point tensor Gauss rule integrates it exactly.
  static const QuadCell<dim> q = tensor_quadrature<dim>(2);
  double m = 0.0;
  for (std::size_t i = 0; i < q.x.size(); ++i) m += det<dim>(jacobian(cell, q.x[i])) * q.w[i];
  return m;
}

template <int dim>
double Mesh<dim>::total_measure() const {
  double m = 0.0;
  for (int c : active_) m += cell_measure(c);
  return m;
}

template <int dim>
void Mesh<dim>::check_jacobians() const {
  // For a multilinear map the determinant attains its extrema on the corner
  // lattice in 2D; the center is added as a cheap extra probe in 3D.
  for (int c : active_) {
    for (int v = 0; v <= n_vertices_per_cell; ++v) {
      std::array<double, dim> ref{};
      if (v < n_vertices_per_cell)
        ref = vertex_ref(v);
      else
        ref.fill(0.5);
      if (det<dim>(jacobian(c, ref)) <= 0.0)
        throw std::runtime_error("mesh: nonpositive Jacobian in cell " + std::to_string(c));
    }
  }
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------
namespace {
struct ArrayHash {
  std::size_t operator()(const std::array<int, 4>& a) const {
    std::size_t h = 1469598103934665603ull;
    for (int v : a) {
      h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return h;
  }
};
} // namespace

template <int dim>
void Mesh<dim>::build_root_neighbors() {
  // Roots are exactly the cells with no parent; generators create them first.
  std::unordered_map<std::array<int, 4>, std::pair<int, int>, ArrayHash> open;
  root_neighbor_.assign(cells.size(), {});
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].parent >= 0) break;  // children are appended after all roots
    for (int f = 0; f < n_faces_per_cell; ++f) root_neighbor_[c][f] = {-1, -1};
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].parent >= 0) break;
    for (int f = 0; f < n_faces_per_cell; ++f) {
      std::array<int, 4> key{-1, -1, -1, -1};
      for (int j = 0; j < n_face_corners; ++j) key[j] = cells[c].v[face_corner_vertex(f, j)];
      std::sort(key.begin(), key.begin() + n_face_corners);
      auto it = open.find(key);
      if (it == open.end()) {
        open.emplace(key, std::make_pair(static_cast<int>(c), f));
      } else {
        root_neighbor_[c][f] = it->second;
        root_neighbor_[it->second.first][it->second.second] = {static_cast<int>(c), f};
        open.erase(it);
      }
    }
  }
}

template <int dim>
std::pair<int, int> Mesh<dim>::neighbor(int cell, int face) const {
  const Cell& c = cells[cell];
  if (c.parent < 0) return root_neighbor_[cell][face];

  const int a = face_axis(face), s = face_side(face);
  if (((c.child_position >> a) & 1) != s) {
    // Face internal to the parent: the sibling across it, same level.
    const int sib = cells[c.parent].children[c.child_position ^ (1 << a)];
    return {sib, 2 * a + (1 - s)};
  }
  auto [N, fN] = neighbor(c.parent, face);
  if (N < 0) return {-1, -1};
  if (cells[N].level < cells[c.parent].level) return {N, fN};
  if (!cells[N].refined()) return {N, fN};

  // Descend into the matching child of N.  Corner correspondence between the
  // parent's face and N's face gives the face-parameter map.
  const Cell& P = cells[c.parent];
  std::array<int, n_face_corners> perm{};
  for (int j = 0; j < n_face_corners; ++j) {
    const int vid = P.v[face_corner_vertex(face, j)];
    int found = -1;
    for (int j2 = 0; j2 < n_face_corners; ++j2)
      if (cells[N].v[face_corner_vertex(fN, j2)] == vid) { found = j2; break; }
    if (found < 0) throw std::logic_error("mesh: face corner mismatch between neighbors");
    perm[j] = found;
  }
  // My subface bits along the parent's face tangent axes.
  std::array<double, dim == 1 ? 1 : dim - 1> center{};
  {
    int t = 0;
    for (int d = 0; d < dim; ++d) {
      if (d == a) continue;
      const int b = (c.child_position >> d) & 1;
      center[t++] = (2.0 * b + 1.0) / 4.0;
    }
  }
  // Map the subface center through the corner-induced affine map.
  auto fc = [&](int j) {
    std::array<double, dim == 1 ? 1 : dim - 1> u{};
    for (int t = 0; t < (dim == 1 ? 1 : dim - 1); ++t) u[t] = (perm[j] >> t) & 1;
    return u;
  };
  std::array<double, dim == 1 ? 1 : dim - 1> img = fc(0);
  for (int t = 0; t < (dim == 1 ? 1 : dim - 1); ++t) {
    const auto e = fc(1 << t);
    for (int u = 0; u < (dim == 1 ? 1 : dim - 1); ++u) img[u] += (e[u] - fc(0)[u]) * center[t];
  }
  int child_pos = face_side(fN) << face_axis(fN);
  {
    int t = 0;
    for (int d = 0; d < dim; ++d) {
      if (d == face_axis(fN)) continue;
      if (img[t] > 0.5) child_pos |= (1 << d);
      ++t;
    }
  }
  return {cells[N].children[child_pos], fN};
}

template <int dim>
static FaceEmbedding<dim> canonical_embedding(int face) {
  FaceEmbedding<dim> e;
  e.origin = Mesh<dim>::vertex_ref(Mesh<dim>::face_corner_vertex(face, 0));
  for (int t = 0; t < dim - 1; ++t) {
    const auto p = Mesh<dim>::vertex_ref(Mesh<dim>::face_corner_vertex(face, 1 << t));
    for (int d = 0; d < dim; ++d) e.tangent[t][d] = p[d] - e.origin[d];
  }
  return e;
}

template <int dim>
void Mesh<dim>::build_faces() {
  faces_.interior.clear();
  faces_.boundary.clear();

  auto face_diam = [&](int cell, int face) {
    double m = 0.0;
    for (int i = 0; i < n_face_corners; ++i)
      for (int j = i + 1; j < n_face_corners; ++j) {
        const auto& a = vertices[cells[cell].v[face_corner_vertex(face, i)]];
        const auto& b = vertices[cells[cell].v[face_corner_vertex(face, j)]];
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
        m = std::max(m, s);
      }
    return std::sqrt(m);
  };

  // Corner-based face measure: segment length in 2d, and in 3d the area of the
  // bilinear patch split into two triangles along the (0,0)-(1,1) diagonal
  // (exact for planar faces, the common case).
  auto face_measure = [&](int cell, int face) {
    std::array<std::array<double, dim>, n_face_corners> c{};
    for (int j = 0; j < n_face_corners; ++j)
      c[j] = vertices[cells[cell].v[face_corner_vertex(face, j)]];
    if constexpr (dim == 2) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) s += (c[1][d] - c[0][d]) * (c[1][d] - c[0][d]);
      return std::sqrt(s);
    } else {
      auto tri = [](const std::array<double, 3>& a, const std::array<double, 3>& b,
                    const std::array<double, 3>& p) {
        const std::array<double, 3> u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const std::array<double, 3> v{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
        const double x = u[1] * v[2] - u[2] * v[1];
        const double y = u[2] * v[0] - u[0] * v[2];
        const double z = u[0] * v[1] - u[1] * v[0];
        return 0.5 * std::sqrt(x * x + y * y + z * z);
      };
      // corners in face-parameter order: (0,0), (1,0), (0,1), (1,1)
      return tri(c[0], c[1], c[3]) + tri(c[0], c[3], c[2]);
    }
  };

  // Corner-permutation-induced affine map from owner face params into the
  // neighbor's reference cell.
  auto conforming_embedding = [&](int cell, int face, int ncell, int nface) {
    std::array<int, n_face_corners> perm{};
    for (int j = 0; j < n_face_corners; ++j) {
      const int vid = cells[cell].v[face_corner_vertex(face, j)];
      int found = -1;
      for (int j2 = 0; j2 < n_face_corners; ++j2)
        if (cells[ncell].v[face_corner_vertex(nface, j2)] == vid) { found = j2; break; }
      if (found < 0) throw std::logic_error("mesh: conforming face corners do not match");
      perm[j] = found;
    }
    FaceEmbedding<dim> e;
    const auto r0 = vertex_ref(face_corner_vertex(nface, perm[0]));
    e.origin = r0;
    for (int t = 0; t < dim - 1; ++t) {
      const auto rt = vertex_ref(face_corner_vertex(nface, perm[1 << t]));
      for (int d = 0; d < dim; ++d) e.tangent[t][d] = rt[d] - r0[d];
    }
    return e;
  };

  for (int K : active_) {
    for (int f = 0; f < n_faces_per_cell; ++f) {
      if (cells[K].boundary_id[f] >= 0) {
        FaceInfo<dim> fi;
        fi.cell_in = K;
        fi.face_in = f;
        fi.boundary_id = cells[K].boundary_id[f];
        fi.emb_in = canonical_embedding<dim>(f);
        fi.diam = face_diam(K, f);
        fi.measure = face_measure(K, f);
        faces_.boundary.push_back(fi);
        continue;
      }
      auto [N, fN] = neighbor(K, f);
      if (N < 0) throw std::logic_error("mesh: interior face without neighbor or boundary id");
      if (cells[N].level == cells[K].level) {
        if (cells[N].refined()) continue;  // fine children record the subfaces
        if (active_index_[K] > active_index_[N]) continue;  // recorded from the other side
        FaceInfo<dim> fi;
        fi.cell_in = K;
        fi.face_in = f;
        fi.cell_out = N;
        fi.face_out = fN;
        fi.emb_in = canonical_embedding<dim>(f);
        fi.emb_out = conforming_embedding(K, f, N, fN);
        fi.diam = face_diam(K, f);
        fi.measure = face_measure(K, f);
        faces_.interior.push_back(fi);
      } else {
        // Hanging subface: K is the fine side, N the active coarse neighbor.
        if (cells[N].level != cells[K].level - 1)
          throw std::logic_error("mesh: more than one level of hanging refinement");
        const int P = cells[K].parent;
        const auto embPN = conforming_embedding(P, f, N, fN);
        // Compose: my face params -> parent's face params -> N reference.
        const int a = face_axis(f);
        std::array<double, dim == 1 ? 1 : dim - 1> off{};
        {
          int t = 0;
          for (int d = 0; d < dim; ++d) {
            if (d == a) continue;
            off[t++] = 0.5 * ((cells[K].child_position >> d) & 1);
          }
        }
        FaceInfo<dim> fi;
        fi.cell_in = K;
        fi.face_in = f;
        fi.cell_out = N;
        fi.face_out = fN;
        fi.hanging = true;
        fi.emb_in = canonical_embedding<dim>(f);
        fi.emb_out.origin = embPN.origin;
        for (int d = 0; d < dim; ++d)
          for (int t = 0; t < dim - 1; ++t) fi.emb_out.origin[d] += off[t] * embPN.tangent[t][d];
        for (int t = 0; t < dim - 1; ++t)
          for (int d = 0; d < dim; ++d) fi.emb_out.tangent[t][d] = 0.5 * embPN.tangent[t][d];
        fi.diam = face_diam(K, f);
        fi.measure = face_measure(K, f);
        faces_.interior.push_back(fi);
      }
    }
  }
}

template <int dim>
void Mesh<dim>::finalize() {
  active_.clear();
  active_index_.assign(cells.size(), -1);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].active) {
      active_index_[c] = static_cast<int>(active_.size());
      active_.push_back(static_cast<int>(c));
    }
  }
  build_root_neighbors();
  build_faces();
  check_jacobians();
}

// ---------------------------------------------------------------------------
// Refinement / coarsening
// ---------------------------------------------------------------------------
template <int dim>
void Mesh<dim>::refine_cell(int cell) {
  if (cells[cell].refined()) {
    // Children already exist from a previous refine/coarsen cycle: reuse them
    // so a refine-coarsen-refine sequence is stable.
    for (int ch : cells[cell].children) cells[ch].active = true;
    cells[cell].active = false;
    return;
  }

  const Cell parent = cells[cell];  // copy: push_back below invalidates refs

  // Lattice of refinement vertices: reference coordinates in {0, 1/2, 1}^dim,
  // indexed lexicographically base 3.
  int n_lattice = 1;
  for (int d = 0; d < dim; ++d) n_lattice *= 3;
  std::vector<int> lattice(n_lattice, -1);
  for (int i = 0; i < n_lattice; ++i) {
    int rem = i;
    std::array<int, dim> t{};
    for (int d = 0; d < dim; ++d) {
      t[d] = rem % 3;
      rem /= 3;
    }
    std::array<double, dim> ref{};
    bool is_corner = true;
    for (int d = 0; d < dim; ++d) {
      ref[d] = 0.5 * t[d];
      if (t[d] == 1) is_corner = false;
    }
    if (is_corner) {
      int v = 0;
      for (int d = 0; d < dim; ++d) v |= (t[d] == 2 ? 1 : 0) << d;
      lattice[i] = parent.v[v];
      continue;
    }
    // Interpolating corners: all combinations over the half-coordinate axes.
    std::array<int, 4> key{-1, -1, -1, -1};
    int nk = 0;
    std::vector<int> half_axes;
    for (int d = 0; d < dim; ++d)
      if (t[d] == 1) half_axes.push_back(d);
    const int ncorn = 1 << half_axes.size();
    if (ncorn <= 4) {
      for (int s = 0; s < ncorn; ++s) {
        int v = 0;
        for (int d = 0; d < dim; ++d) v |= (t[d] == 2 ? 1 : 0) << d;
        for (std::size_t h = 0; h < half_axes.size(); ++h)
          if ((s >> h) & 1) v |= 1 << half_axes[h];
        key[nk++] = parent.v[v];
      }
      std::sort(key.begin(), key.begin() + nk);
      auto it = midpoint_cache_.find(key);
      if (it != midpoint_cache_.end()) {
        lattice[i] = it->second;
        continue;
      }
    }
    std::array<double, dim> pos = map_point(cell, ref);
    // Snap new vertices created on a curved boundary face.
    if (snap_boundary_id >= 0 && snap_fn) {
      for (int f = 0; f < n_faces_per_cell; ++f) {
        if (parent.boundary_id[f] != snap_boundary_id) continue;
        if (ref[face_axis(f)] == static_cast<double>(face_side(f))) {
          pos = snap_fn(pos);
          break;
        }
      }
    }
    const int id = static_cast<int>(vertices.size());
    vertices.push_back(pos);
    lattice[i] = id;
    if (ncorn <= 4) midpoint_cache_.emplace(key, id);
  }

  std::array<int, n_children> child_ids{};
  for (int p = 0; p < n_children; ++p) {
    Cell ch;
    for (int b = 0; b < n_vertices_per_cell; ++b) {
      int li = 0, stride = 1;
      for (int d = 0; d < dim; ++d) {
        li += (((p >> d) & 1) + ((b >> d) & 1)) * stride;
        stride *= 3;
      }
      ch.v[b] = lattice[li];
    }
    ch.level = parent.level + 1;
    ch.parent = cell;
    ch.child_position = p;
    for (int f = 0; f < n_faces_per_cell; ++f) {
      if (((p >> face_axis(f)) & 1) == face_side(f)) ch.boundary_id[f] = parent.boundary_id[f];
    }
    child_ids[p] = static_cast<int>(cells.size());
    cells.push_back(ch);
  }
  cells[cell].children = child_ids;
  cells[cell].active = false;
}

template <int dim>
void Mesh<dim>::refine_globally(int rounds) {
  for (int r = 0; r < rounds; ++r) {
    const std::vector<int> act = active_;
    for (int c : act) refine_cell(c);
    finalize();
  }
}

template <int dim>
int Mesh<dim>::refine_and_coarsen(const std::vector<int>& refine_set, const std::vector<int>& coarsen_set) {
  std::vector<char> ref_flag(cells.size(), 0);
  for (int ai : refine_set) ref_flag[active_[ai]] = 1;

  // 1-irregularity closure: refining the fine side of a hanging face forces
  // the coarse side to refine as well; iterate to a fixed point.
  int closure = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& fi : faces_.interior) {
      if (!fi.hanging) continue;
      if (ref_flag[fi.cell_in] && !ref_flag[fi.cell_out]) {
        ref_flag[fi.cell_out] = 1;
        ++closure;
        changed = true;
      }
    }
  }

  // Coarsening: only full sibling groups, never against the refine set, and
  // only if the result stays 1-irregular.
  std::map<int, int> group_count;
  for (int ai : coarsen_set) {
    const int c = active_[ai];
    if (ref_flag[c]) continue;
    if (cells[c].parent < 0) continue;
    group_count[cells[c].parent] += 1;
  }
  std::vector<int> coarsen_parents;
  for (auto [parent, count] : group_count) {
    if (count != n_children) continue;
    bool ok = true;
    for (int ch : cells[parent].children) {
      if (!cells[ch].active) { ok = false; break; }
      for (int f = 0; f < n_faces_per_cell && ok; ++f) {
        if (cells[ch].boundary_id[f] >= 0) continue;
        auto [N, fN] = neighbor(ch, f);
        (void)fN;
        if (N < 0 || cells[N].parent == parent) continue;
        if (cells[N].level == cells[ch].level) {
          // A same-level neighbor that is refined, or about to be, would sit
          // two levels below the reactivated parent.
          if (cells[N].refined() || ref_flag[N]) ok = false;
        }
      }
      if (!ok) break;
    }
    if (ok) coarsen_parents.push_back(parent);
  }

  for (std::size_t c = 0; c < ref_flag.size(); ++c)
    if (ref_flag[c] && cells[c].active) refine_cell(static_cast<int>(c));
  for (int parent : coarsen_parents) {
    for (int ch : cells[parent].children) cells[ch].active = false;
    cells[parent].active = true;
  }
  finalize();
  return closure;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------
template <int dim>
Mesh<dim> generate_cartesian(int n_el, const std::array<double, dim>& lo, const std::array<double, dim>& hi) {
  if (n_el < 1) throw std::invalid_argument("generate_cartesian: n_el must be >= 1");
  for (int d = 0; d < dim; ++d)
    if (!(hi[d] > lo[d])) throw std::invalid_argument("generate_cartesian: box extent must be positive");

  Mesh<dim> m;
  const int nv1 = n_el + 1;
  int nv = 1;
  for (int d = 0; d < dim; ++d) nv *= nv1;
  m.vertices.resize(nv);
  for (int i = 0; i < nv; ++i) {
    int rem = i;
    for (int d = 0; d < dim; ++d) {
      const int id = rem % nv1;
      rem /= nv1;
      m.vertices[i][d] = lo[d] + (hi[d] - lo[d]) * id / n_el;
    }
  }
  int nc = 1;
  for (int d = 0; d < dim; ++d) nc *= n_el;
  m.cells.resize(nc);
  for (int i = 0; i < nc; ++i) {
    int rem = i;
    std::array<int, dim> ic{};
    for (int d = 0; d < dim; ++d) {
      ic[d] = rem % n_el;
      rem /= n_el;
    }
    auto& cell = m.cells[i];
    for (int b = 0; b < Mesh<dim>::n_vertices_per_cell; ++b) {
      int vi = 0, stride = 1;
      for (int d = 0; d < dim; ++d) {
        vi += (ic[d] + ((b >> d) & 1)) * stride;
        stride *= nv1;
      }
      cell.v[b] = vi;
    }
    for (int d = 0; d < dim; ++d) {
      if (ic[d] == 0) cell.boundary_id[2 * d] = 2 * d;
      if (ic[d] == n_el - 1) cell.boundary_id[2 * d + 1] = 2 * d + 1;
    }
  }
  m.finalize();
  return m;
}

template <int dim>
void distort(Mesh<dim>& mesh, double amplitude, unsigned seed) {
  if (amplitude == 0.0) return;
  // Vertices touching any boundary face stay fixed.
  std::vector<char> on_boundary(mesh.vertices.size(), 0);
  std::vector<char> in_use(mesh.vertices.size(), 0);
  for (int c : mesh.active_cells()) {
    for (int v = 0; v < Mesh<dim>::n_vertices_per_cell; ++v) in_use[mesh.cells[c].v[v]] = 1;
    for (int f = 0; f < Mesh<dim>::n_faces_per_cell; ++f) {
      if (mesh.cells[c].boundary_id[f] < 0) continue;
      for (int j = 0; j < Mesh<dim>::n_face_corners; ++j)
        on_boundary[mesh.cells[c].v[Mesh<dim>::face_corner_vertex(f, j)]] = 1;
    }
  }
  const std::vector<std::array<double, dim>> saved = mesh.vertices;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!in_use[v] || on_boundary[v]) continue;
    for (int d = 0; d < dim; ++d) mesh.vertices[v][d] += amplitude * uni(rng);
  }
  try {
    mesh.check_jacobians();
  } catch (const std::exception&) {
    mesh.vertices = saved;
    throw;
  }
  mesh.finalize();  // refresh face geometry (diam, measure) for the moved vertices
}

Mesh<2> generate_cylinder_channel(int level) {
  if (level < 0) throw std::invalid_argument("generate_cylinder_channel: level must be >= 0");
  const double H = 0.41, W = 2.2, R = 0.05;
  const double cx = 0.2, cy = 0.2;

  Mesh<2> m;
  std::map<std::pair<long long, long long>, int> vmap;
  auto vertex = [&](double x, double y) {
    // Coordinates are constructed from exact expressions; key on scaled
    // integers to dedupe bit-identical points.
    const auto key = std::make_pair(static_cast<long long>(std::llround(x * 1e12)),
                                    static_cast<long long>(std::llround(y * 1e12)));
    auto it = vmap.find(key);
    if (it != vmap.end()) return it->second;
    const int id = static_cast<int>(m.vertices.size());
    m.vertices.push_back({x, y});
    vmap.emplace(key, id);
    return id;
  };

  // Grid scaffolding: 20 columns x 4 rows, minus the 2x2 block [0.1,0.3]^2
  // that the cylinder ring fills.
  std::vector<double> xc = {0.0, 0.1, 0.2, 0.3};
  for (int i = 1; i <= 17; ++i) xc.push_back(0.3 + (W - 0.3) * i / 17.0);
  const std::vector<double> yc = {0.0, 0.1, 0.2, 0.3, H};
  const int ncol = static_cast<int>(xc.size()) - 1;
  const int nrow = static_cast<int>(yc.size()) - 1;

  auto add_cell = [&](int v0, int v1, int v2, int v3) {
    Mesh<2>::Cell c;
    c.v = {v0, v1, v2, v3};
    m.cells.push_back(c);
    return static_cast<int>(m.cells.size()) - 1;
  };

  for (int row = 0; row < nrow; ++row) {
    for (int col = 0; col < ncol; ++col) {
      const bool in_ring_block = (col == 1 || col == 2) && (row == 1 || row == 2);
      if (in_ring_block) continue;
      const int v0 = vertex(xc[col], yc[row]);
      const int v1 = vertex(xc[col + 1], yc[row]);
      const int v2 = vertex(xc[col], yc[row + 1]);
      const int v3 = vertex(xc[col + 1], yc[row + 1]);
      const int c = add_cell(v0, v1, v2, v3);
      if (col == 0) m.cells[c].boundary_id[0] = 1;            // inlet
      if (col == ncol - 1) m.cells[c].boundary_id[1] = 2;     // outlet
      if (row == 0) m.cells[c].boundary_id[2] = 0;            // wall
      if (row == nrow - 1) m.cells[c].boundary_id[3] = 0;     // wall
    }
  }

  // O-ring around the cylinder: 8 sectors x 2 radial layers.  The outer layer
  // boundary is the square [0.1,0.3]^2 sampled at its 4 corners and 4 edge
  // midpoints so it conforms with the grid scaffolding.
  const double outer_pts[8][2] = {{0.1, 0.1}, {0.2, 0.1}, {0.3, 0.1}, {0.3, 0.2},
                                  {0.3, 0.3}, {0.2, 0.3}, {0.1, 0.3}, {0.1, 0.2}};
  int circle_id[8], mid_id[8], outer_id[8];
  for (int j = 0; j < 8; ++j) {
    const double ox = outer_pts[j][0], oy = outer_pts[j][1];
    const double th = std::atan2(oy - cy, ox - cx);
    const double cxp = cx + R * std::cos(th), cyp = cy + R * std::sin(th);
    circle_id[j] = vertex(cxp, cyp);
    mid_id[j] = vertex(0.5 * (cxp + ox), 0.5 * (cyp + oy));
    outer_id[j] = vertex(ox, oy);
  }
  // Sectors run counterclockwise; putting the circle nodes on the reference
  // y+ side keeps the Jacobian positive.
  for (int j = 0; j < 8; ++j) {
    const int j1 = (j + 1) % 8;
    const int inner = add_cell(mid_id[j], mid_id[j1], circle_id[j], circle_id[j1]);
    m.cells[inner].boundary_id[3] = 3;  // cylinder surface on the y+ face
    add_cell(outer_id[j], outer_id[j1], mid_id[j], mid_id[j1]);
  }

  m.snap_boundary_id = 3;
  m.snap_fn = [cx, cy, R](const std::array<double, 2>& p) {
    const double dx = p[0] - cx, dy = p[1] - cy;
    const double r = std::sqrt(dx * dx + dy * dy);
    return std::array<double, 2>{cx + R * dx / r, cy + R * dy / r};
  };

  m.finalize();
  if (level > 0) m.refine_globally(level);
  return m;
}

// ---------------------------------------------------------------------------
// Plain-text I/O
// ---------------------------------------------------------------------------
template <int dim>
std::string export_text(const Mesh<dim>& mesh) {
  // Active cells become the root cells of the exported mesh; used vertices
  // are renumbered in ascending original-id order.  The flat format has no
  // notion of hanging faces, so only conforming meshes can be written.
  for (const auto& f : mesh.faces().interior)
    if (f.hanging) throw std::runtime_error("mesh export: mesh has hanging faces");
  std::vector<int> vmap(mesh.vertices.size(), -1);
  int nv = 0;
  for (int c : mesh.active_cells())
    for (int v = 0; v < Mesh<dim>::n_vertices_per_cell; ++v) {
      const int id = mesh.cells[c].v[v];
      if (vmap[id] < 0) vmap[id] = 0;
    }
  for (std::size_t v = 0; v < vmap.size(); ++v)
    if (vmap[v] == 0) vmap[v] = nv++;

  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %d %d\n", dim, nv, mesh.n_active());
  out += buf;
  for (std::size_t v = 0; v < vmap.size(); ++v) {
    if (vmap[v] < 0) continue;
    for (int d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", mesh.vertices[v][d]);
      out += buf;
      out += (d + 1 < dim) ? ' ' : '\n';
    }
  }
  for (int c : mesh.active_cells()) {
    for (int v = 0; v < Mesh<dim>::n_vertices_per_cell; ++v) {
      std::snprintf(buf, sizeof buf, "%d", vmap[mesh.cells[c].v[v]]);
      out += buf;
      out += (v + 1 < Mesh<dim>::n_vertices_per_cell) ? ' ' : '\n';
    }
  }
  for (std::size_t i = 0; i < mesh.active_cells().size(); ++i) {
    const int c = mesh.active_cells()[i];
    for (int f = 0; f < Mesh<dim>::n_faces_per_cell; ++f) {
      if (mesh.cells[c].boundary_id[f] < 0) continue;
      std::snprintf(buf, sizeof buf, "%zu %d %d\n", i, f, mesh.cells[c].boundary_id[f]);
      out += buf;
    }
  }
  return out;
}

int mesh_file_dim(const std::string& text) {
  std::istringstream in(text);
  int d = 0;
  in >> d;
  if (!in || (d != 2 && d != 3)) throw std::runtime_error("mesh import: bad header");
  return d;
}

template <int dim>
Mesh<dim> import_text(const std::string& text) {
  std::istringstream in(text);
  int d = 0, nv = 0, nc = 0;
  in >> d >> nv >> nc;
  if (!in || d != dim) throw std::runtime_error("mesh import: dimension mismatch");
  Mesh<dim> m;
  m.vertices.resize(nv);
  for (int v = 0; v < nv; ++v)
    for (int a = 0; a < dim; ++a) in >> m.vertices[v][a];
  m.cells.resize(nc);
  for (int c = 0; c < nc; ++c)
    for (int v = 0; v < Mesh<dim>::n_vertices_per_cell; ++v) {
      in >> m.cells[c].v[v];
      if (!in || m.cells[c].v[v] < 0 || m.cells[c].v[v] >= nv)
        throw std::runtime_error("mesh import: bad cell vertex index");
    }
  int cell, f, id;
  while (in >> cell >> f >> id) {
    if (cell < 0 || cell >= nc || f < 0 || f >= Mesh<dim>::n_faces_per_cell)
      throw std::runtime_error("mesh import: bad boundary face record");
    m.cells[cell].boundary_id[f] = id;
  }
  m.finalize();
  return m;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------
template class Mesh<2>;
template class Mesh<3>;
template Mesh<2> generate_cartesian<2>(int, const std::array<double, 2>&, const std::array<double, 2>&);
template Mesh<3> generate_cartesian<3>(int, const std::array<double, 3>&, const std::array<double, 3>&);
template void distort<2>(Mesh<2>&, double, unsigned);
template void distort<3>(Mesh<3>&, double, unsigned);
template std::string export_text<2>(const Mesh<2>&);
template std::string export_text<3>(const Mesh<3>&);
template Mesh<2> import_text<2>(const std::string&);
template Mesh<3> import_text<3>(const std::string&);

} // namespace dgns
