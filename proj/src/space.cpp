/// @file space.cpp

#include "space.hpp"

#include "kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace dgns {

namespace {

template <int dim>
void invert(const std::array<std::array<double, dim>, dim>& J, double* inv, double& detJ) {
  if constexpr (dim == 2) {
    detJ = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    const double id = 1.0 / detJ;
    inv[0] = J[1][1] * id;
    inv[1] = -J[0][1] * id;
    inv[2] = -J[1][0] * id;
    inv[3] = J[0][0] * id;
  } else {
    const double c00 = J[1][1] * J[2][2] - J[1][2] * J[2][1];
    const double c01 = J[1][2] * J[2][0] - J[1][0] * J[2][2];
    const double c02 = J[1][0] * J[2][1] - J[1][1] * J[2][0];
    detJ = J[0][0] * c00 + J[0][1] * c01 + J[0][2] * c02;
    const double id = 1.0 / detJ;
    inv[0] = c00 * id;
    inv[1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) * id;
    inv[2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) * id;
    inv[3] = c01 * id;
    inv[4] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) * id;
    inv[5] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) * id;
    inv[6] = c02 * id;
    inv[7] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) * id;
    inv[8] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) * id;
  }
}

} // namespace

// ---------------------------------------------------------------------------
// GeometryCache
// ---------------------------------------------------------------------------
template <int dim>
GeometryCache<dim>::GeometryCache(const Mesh<dim>& mesh) : mesh_(&mesh) {
  diam_.resize(mesh.n_active());
  measure_.resize(mesh.n_active());
  min_diam_ = 0.0;
  total_measure_ = 0.0;
  for (int i = 0; i < mesh.n_active(); ++i) {
    diam_[i] = mesh.cell_diam(mesh.active_cells()[i]);
    measure_[i] = mesh.cell_measure(mesh.active_cells()[i]);
    min_diam_ = i == 0 ? diam_[i] : std::min(min_diam_, diam_[i]);
    total_measure_ += measure_[i];
  }
}

template <int dim>
const typename GeometryCache<dim>::Bundle& GeometryCache<dim>::bundle(int n1d) const {
  auto it = cache_.find(n1d);
  if (it != cache_.end()) return *it->second;

  auto b = std::make_unique<Bundle>();
  b->cell_rule = tensor_quadrature<dim>(n1d);
  b->face_rule = tensor_quadrature<dim - 1>(n1d);
  const auto& mesh = *mesh_;

  const int nq = static_cast<int>(b->cell_rule.x.size());
  b->cells.resize(mesh.n_active());
  for (int i = 0; i < mesh.n_active(); ++i) {
    const int c = mesh.active_cells()[i];
    auto& g = b->cells[i];
    g.detJw.resize(nq);
    g.Jinv.resize(static_cast<std::size_t>(nq) * dim * dim);
    g.xq.resize(nq);
    for (int q = 0; q < nq; ++q) {
      const auto J = mesh.jacobian(c, b->cell_rule.x[q]);
      double detJ;
      invert<dim>(J, g.Jinv.data() + static_cast<std::size_t>(q) * dim * dim, detJ);
      g.detJw[q] = detJ * b->cell_rule.w[q];
      g.xq[q] = mesh.map_point(c, b->cell_rule.x[q]);
    }
  }

  const int nqf = static_cast<int>(b->face_rule.x.size());
  auto fill_side = [&](int cell, const FaceEmbedding<dim>& emb, int q, double* Jinv_q,
                       std::array<std::array<double, dim>, dim>& J_out) {
    const auto r = emb.map(b->face_rule.x[q]);
    J_out = mesh.jacobian(cell, r);
    double detJ;
    invert<dim>(J_out, Jinv_q, detJ);
    return r;
  };

  auto build_face = [&](const FaceInfo<dim>& fi, FaceGeometry<dim>& g, bool interior) {
    g.w_ds.resize(nqf);
    g.n.resize(nqf);
    g.xq.resize(nqf);
    g.Jinv_in.resize(static_cast<std::size_t>(nqf) * dim * dim);
    if (interior) g.Jinv_out.resize(static_cast<std::size_t>(nqf) * dim * dim);

    const int axis = Mesh<dim>::face_axis(fi.face_in);
    const double sgn = Mesh<dim>::face_side(fi.face_in) == 1 ? 1.0 : -1.0;

    for (int q = 0; q < nqf; ++q) {
      std::array<std::array<double, dim>, dim> J;
      const auto r = fill_side(fi.cell_in, fi.emb_in, q,
                               g.Jinv_in.data() + static_cast<std::size_t>(q) * dim * dim, J);
      g.xq[q] = mesh.map_point(fi.cell_in, r);

      // Physical tangents of the face parameterization give the surface
      // element (the embedding already carries any subface scaling).
      std::array<std::array<double, dim>, dim - 1> tau{};
      for (int t = 0; t < dim - 1; ++t)
        for (int d = 0; d < dim; ++d) {
          double s = 0.0;
          for (int a = 0; a < dim; ++a) s += J[d][a] * fi.emb_in.tangent[t][a];
          tau[t][d] = s;
        }
      double ds;
      if constexpr (dim == 2) {
        ds = std::hypot(tau[0][0], tau[0][1]);
      } else {
        const std::array<double, 3> cr = {tau[0][1] * tau[1][2] - tau[0][2] * tau[1][1],
                                          tau[0][2] * tau[1][0] - tau[0][0] * tau[1][2],
                                          tau[0][0] * tau[1][1] - tau[0][1] * tau[1][0]};
        ds = std::sqrt(cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]);
      }
      g.w_ds[q] = ds * b->face_rule.w[q];

      // Outward normal from the owner side: Nanson direction J^{-T} n_ref.
      const double* Ji = g.Jinv_in.data() + static_cast<std::size_t>(q) * dim * dim;
      std::array<double, dim> n{};
      double nn = 0.0;
      for (int d = 0; d < dim; ++d) {
        n[d] = sgn * Ji[axis * dim + d];  // (J^{-T})_{d,axis} = (J^{-1})_{axis,d}
        nn += n[d] * n[d];
      }
      nn = 1.0 / std::sqrt(nn);
      for (int d = 0; d < dim; ++d) g.n[q][d] = n[d] * nn;

      if (interior) {
        std::array<std::array<double, dim>, dim> J2;
        fill_side(fi.cell_out, fi.emb_out, q,
                  g.Jinv_out.data() + static_cast<std::size_t>(q) * dim * dim, J2);
      }
    }
  };

  b->interior.resize(mesh.faces().interior.size());
  for (std::size_t i = 0; i < b->interior.size(); ++i)
    build_face(mesh.faces().interior[i], b->interior[i], true);
  b->boundary.resize(mesh.faces().boundary.size());
  for (std::size_t i = 0; i < b->boundary.size(); ++i)
    build_face(mesh.faces().boundary[i], b->boundary[i], false);

  auto [pos, ok] = cache_.emplace(n1d, std::move(b));
  (void)ok;
  return *pos->second;
}

template <int dim>
const std::vector<CellGeometry<dim>>& GeometryCache<dim>::cells(int n1d) const {
  return bundle(n1d).cells;
}
template <int dim>
const std::vector<FaceGeometry<dim>>& GeometryCache<dim>::interior_faces(int n1d) const {
  return bundle(n1d).interior;
}
template <int dim>
const std::vector<FaceGeometry<dim>>& GeometryCache<dim>::boundary_faces(int n1d) const {
  return bundle(n1d).boundary;
}
template <int dim>
const QuadCell<dim>& GeometryCache<dim>::cell_rule(int n1d) const {
  return bundle(n1d).cell_rule;
}
template <int dim>
const QuadCell<dim - 1>& GeometryCache<dim>::face_rule(int n1d) const {
  return bundle(n1d).face_rule;
}

// ---------------------------------------------------------------------------
// FunctionSpace
// ---------------------------------------------------------------------------
template <int dim>
FunctionSpace<dim>::FunctionSpace(const Mesh<dim>& mesh, int degree, int n_comp)
    : mesh_(&mesh), degree_(degree), n_comp_(n_comp),
      basis1d_(gauss_lobatto_points(degree + 1)) {
  if (degree < 1) throw std::invalid_argument("FunctionSpace: degree must be >= 1");
  nb_ = 1;
  for (int d = 0; d < dim; ++d) nb_ *= degree + 1;
  nodes_.resize(nb_);
  for (int i = 0; i < nb_; ++i) {
    int rem = i;
    for (int d = 0; d < dim; ++d) {
      nodes_[i][d] = basis1d_.nodes[rem % (degree + 1)];
      rem /= degree + 1;
    }
  }
}

template <int dim>
const BasisTable<dim>& FunctionSpace<dim>::cell_table(int n1d) const {
  auto it = cell_tables_.find(n1d);
  if (it != cell_tables_.end()) return *it->second;
  const auto rule = tensor_quadrature<dim>(n1d);
  auto tab = std::make_unique<BasisTable<dim>>(tabulate_basis<dim>(basis1d_, rule.x));
  auto [pos, ok] = cell_tables_.emplace(n1d, std::move(tab));
  (void)ok;
  return *pos->second;
}

template <int dim>
const BasisTable<dim>& FunctionSpace<dim>::trace_table(int n1d, const FaceEmbedding<dim>& emb) const {
  // Embedding entries are multiples of 1/4 by construction, so quantizing by
  // 4 gives an exact key.
  EmbKey key{};
  int k = 0;
  for (int d = 0; d < dim; ++d) key[k++] = static_cast<int>(std::lround(emb.origin[d] * 4));
  for (int t = 0; t < dim - 1; ++t)
    for (int d = 0; d < dim; ++d) key[k++] = static_cast<int>(std::lround(emb.tangent[t][d] * 4));

  const auto full_key = std::make_pair(n1d, key);
  auto it = trace_tables_.find(full_key);
  if (it != trace_tables_.end()) return *it->second;

  const auto rule = tensor_quadrature<dim - 1>(n1d);
  std::vector<std::array<double, dim>> pts(rule.x.size());
  for (std::size_t q = 0; q < rule.x.size(); ++q) pts[q] = emb.map(rule.x[q]);
  auto tab = std::make_unique<BasisTable<dim>>(tabulate_basis<dim>(basis1d_, pts));
  auto [pos, ok] = trace_tables_.emplace(full_key, std::move(tab));
  (void)ok;
  return *pos->second;
}

template <int dim>
void FunctionSpace<dim>::interpolate(
    const std::function<void(const std::array<double, dim>&, double*)>& f, Field& out) const {
  out.assign(n_dofs(), 0.0);
  std::vector<double> tmp(n_comp_);
  for (int i = 0; i < mesh_->n_active(); ++i) {
    const int c = mesh_->active_cells()[i];
    const int off = offset(i);
    for (int j = 0; j < nb_; ++j) {
      const auto x = mesh_->map_point(c, nodes_[j]);
      f(x, tmp.data());
      for (int comp = 0; comp < n_comp_; ++comp) out[off + comp * nb_ + j] = tmp[comp];
    }
  }
}

template <int dim>
bool locate_in_cell(const Mesh<dim>& mesh, int cell, const std::array<double, dim>& x,
                    std::array<double, dim>& ref, double tol) {
  // Quick reject on the bounding box.
  const auto& cc = mesh.cells[cell];
  for (int d = 0; d < dim; ++d) {
    double lo = mesh.vertices[cc.v[0]][d], hi = lo;
    for (int v = 1; v < Mesh<dim>::n_vertices_per_cell; ++v) {
      lo = std::min(lo, mesh.vertices[cc.v[v]][d]);
      hi = std::max(hi, mesh.vertices[cc.v[v]][d]);
    }
    const double pad = 0.25 * (hi - lo) + tol;
    if (x[d] < lo - pad || x[d] > hi + pad) return false;
  }

  ref.fill(0.5);
  for (int it = 0; it < 60; ++it) {
    const auto y = mesh.map_point(cell, ref);
    std::array<double, dim> r;
    double rn = 0.0;
    for (int d = 0; d < dim; ++d) {
      r[d] = y[d] - x[d];
      rn = std::max(rn, std::abs(r[d]));
    }
    if (rn < 1e-13) break;
    const auto J = mesh.jacobian(cell, ref);
    double Jinv[dim * dim], detJ;
    invert<dim>(J, Jinv, detJ);
    for (int d = 0; d < dim; ++d) {
      double s = 0.0;
      for (int a = 0; a < dim; ++a) s += Jinv[d * dim + a] * r[a];
      ref[d] -= s;
      ref[d] = std::min(1.5, std::max(-0.5, ref[d]));
    }
  }
  const auto y = mesh.map_point(cell, ref);
  double rn = 0.0;
  for (int d = 0; d < dim; ++d) rn = std::max(rn, std::abs(y[d] - x[d]));
  if (rn > tol) return false;
  for (int d = 0; d < dim; ++d)
    if (ref[d] < -tol || ref[d] > 1.0 + tol) return false;
  return true;
}

template <int dim>
bool FunctionSpace<dim>::evaluate(const Field& field, const std::array<double, dim>& x,
                                  double* out) const {
  std::array<double, dim> ref;
  for (int i = 0; i < mesh_->n_active(); ++i) {
    const int c = mesh_->active_cells()[i];
    if (!locate_in_cell<dim>(*mesh_, c, x, ref)) continue;

    // Tensor basis values at ref.
    const int n1 = degree_ + 1;
    std::vector<double> v1(static_cast<std::size_t>(dim) * n1);
    for (int d = 0; d < dim; ++d) basis1d_.values(ref[d], v1.data() + static_cast<std::size_t>(d) * n1);
    const int off = offset(i);
    for (int comp = 0; comp < n_comp_; ++comp) {
      double s = 0.0;
      for (int j = 0; j < nb_; ++j) {
        double phi = 1.0;
        int rem = j;
        for (int d = 0; d < dim; ++d) {
          phi *= v1[static_cast<std::size_t>(d) * n1 + rem % n1];
          rem /= n1;
        }
        s += field[off + comp * nb_ + j] * phi;
      }
      out[comp] = s;
    }
    return true;
  }
  return false;
}

template <int dim>
double FunctionSpace<dim>::mean_value(const Field& field, const GeometryCache<dim>& geom,
                                      int comp) const {
  const int n1d = degree_ + 1;
  const auto& tab = cell_table(n1d);
  const auto& cells = geom.cells(n1d);
  std::vector<double> vals(tab.nq);
  double sum = 0.0;
  for (int i = 0; i < mesh_->n_active(); ++i) {
    kern::contract_rows(nb_, tab.nq, tab.value_data(), field.data() + offset(i) + comp * nb_,
                        vals.data());
    for (int q = 0; q < tab.nq; ++q) sum += cells[i].detJw[q] * vals[q];
  }
  return sum / geom.total_measure();
}

template <int dim>
void FunctionSpace<dim>::subtract_mean(Field& field, const GeometryCache<dim>& geom) const {
  if (n_comp_ != 1) throw std::logic_error("subtract_mean expects a scalar space");
  const double m = mean_value(field, geom, 0);
  for (auto& v : field) v -= m;
}

// ---------------------------------------------------------------------------
template class GeometryCache<2>;
template class GeometryCache<3>;
template class FunctionSpace<2>;
template class FunctionSpace<3>;
template bool locate_in_cell<2>(const Mesh<2>&, int, const std::array<double, 2>&,
                                std::array<double, 2>&, double);
template bool locate_in_cell<3>(const Mesh<3>&, int, const std::array<double, 3>&,
                                std::array<double, 3>&, double);

} // namespace dgns
