#include "forms.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dgns {

namespace {

/// Values and gradients of an n_comp coefficient field at the points of one
/// cell (or one side of a face).
template <int dim>
struct Eval {
  int nc = 0, nq = 0;
  std::vector<double> val;   // [nc][nq]
  std::vector<double> dref;  // [nc][dim][nq] reference derivatives
  std::vector<double> gp;    // [nc][dim][nq] physical gradient

  void resize(int nc_, int nq_) {
    nc = nc_;
    nq = nq_;
    val.resize(static_cast<size_t>(nc) * nq);
    dref.resize(static_cast<size_t>(nc) * dim * nq);
    gp.resize(static_cast<size_t>(nc) * dim * nq);
  }
  double* v(int c) { return val.data() + static_cast<size_t>(c) * nq; }
  const double* v(int c) const { return val.data() + static_cast<size_t>(c) * nq; }
  double* dr(int c, int a) { return dref.data() + (static_cast<size_t>(c) * dim + a) * nq; }
  double* g(int c, int d) { return gp.data() + (static_cast<size_t>(c) * dim + d) * nq; }
  const double* g(int c, int d) const {
    return gp.data() + (static_cast<size_t>(c) * dim + d) * nq;
  }

  /// coeff points at the first dof of the cell (component-blocked layout).
  void values(const BasisTable<dim>& tab, const double* coeff) {
    for (int c = 0; c < nc; ++c)
      kern::contract_rows(tab.nb, nq, tab.value_data(), coeff + static_cast<size_t>(c) * tab.nb,
                          v(c));
  }
  void gradients(const BasisTable<dim>& tab, const double* coeff, const double* Jinv) {
    for (int c = 0; c < nc; ++c)
      for (int a = 0; a < dim; ++a)
        kern::contract_rows(tab.nb, nq, tab.der_data(a),
                            coeff + static_cast<size_t>(c) * tab.nb, dr(c, a));
    for (int c = 0; c < nc; ++c)
      for (int q = 0; q < nq; ++q) {
        const double* Ji = Jinv + static_cast<size_t>(q) * dim * dim;
        double gd[dim];
        for (int d = 0; d < dim; ++d) {
          double s = 0.0;
          for (int a = 0; a < dim; ++a) s += Ji[a * dim + d] * dr(c, a)[q];
          gd[d] = s;
        }
        for (int d = 0; d < dim; ++d) g(c, d)[q] = gd[d];
      }
  }
};

/// Integrand accumulator for one cell / one face side: value-test and
/// physical-gradient-test integrands (already multiplied by the measure),
/// projected into the output through the basis table on flush.
template <int dim>
struct TestAcc {
  int nc = 0, nq = 0;
  std::vector<double> sval;   // [nc][nq]
  std::vector<double> sgrad;  // [nc][dim][nq]
  std::vector<double> scratch;
  bool any_grad = false;

  void reset(int nc_, int nq_) {
    nc = nc_;
    nq = nq_;
    sval.assign(static_cast<size_t>(nc) * nq, 0.0);
    sgrad.assign(static_cast<size_t>(nc) * dim * nq, 0.0);
    scratch.resize(nq);
    any_grad = false;
  }
  double* v(int c) { return sval.data() + static_cast<size_t>(c) * nq; }
  double* g(int c, int d) {
    any_grad = true;
    return sgrad.data() + (static_cast<size_t>(c) * dim + d) * nq;
  }

  /// out points at the first dof of the cell; Jinv maps the physical-gradient
  /// integrand back to reference test derivatives.
  void flush(const BasisTable<dim>& tab, const double* Jinv, double* out) {
    for (int c = 0; c < nc; ++c) {
      kern::project_rows(tab.nb, nq, tab.value_data(),
                         sval.data() + static_cast<size_t>(c) * nq,
                         out + static_cast<size_t>(c) * tab.nb);
      if (!any_grad) continue;
      const double* sg = sgrad.data() + static_cast<size_t>(c) * dim * nq;
      for (int a = 0; a < dim; ++a) {
        for (int q = 0; q < nq; ++q) {
          const double* Ji = Jinv + static_cast<size_t>(q) * dim * dim;
          double s = 0.0;
          for (int d = 0; d < dim; ++d) s += Ji[a * dim + d] * sg[static_cast<size_t>(d) * nq + q];
          scratch[q] = s;
        }
        kern::project_rows(tab.nb, nq, tab.der_data(a), scratch.data(),
                           out + static_cast<size_t>(c) * tab.nb);
      }
    }
  }
};

/// Mean penalty coefficient of an interior face.
template <int dim>
double face_penalty(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                    const FaceInfo<dim>& fi) {
  const Mesh<dim>& mesh = geom.mesh();
  const double s_in =
      sip_sigma(V.degree(), fi.measure, geom.cell_measure(mesh.active_index(fi.cell_in)));
  const double s_out =
      sip_sigma(V.degree(), fi.measure, geom.cell_measure(mesh.active_index(fi.cell_out)));
  return 0.5 * (s_in + s_out);
}

/// Penalty coefficient of a boundary face (owner side only).
template <int dim>
double boundary_penalty(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                        const FaceInfo<dim>& fi) {
  return sip_sigma(V.degree(), fi.measure,
                   geom.cell_measure(geom.mesh().active_index(fi.cell_in)));
}

/// Physical gradient of all basis functions of one table at one point.
template <int dim>
void basis_phys_grad(const BasisTable<dim>& tab, int q, const double* Jinv, int b, double* g) {
  const double* Ji = Jinv + static_cast<size_t>(q) * dim * dim;
  for (int d = 0; d < dim; ++d) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += Ji[a * dim + d] * tab.der_data(a)[b * tab.nq + q];
    g[d] = s;
  }
}

// ---------------------------------------------------------------------------
// Scalar SIP building block (pressure Helmholtz / postprocessing Laplacian)
// ---------------------------------------------------------------------------

/// out += mass_coef * (x, q) + (grad x, grad q) + interior SIP terms;
/// boundary faces get homogeneous Dirichlet terms when dirichlet_bdry.
template <int dim>
void scalar_sip_apply(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                      double mass_coef, bool dirichlet_bdry, const Field& x, Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  const int rule = V.degree() + 2;
  const auto& tab = V.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;

  Eval<dim> u;
  u.resize(1, nq);
  TestAcc<dim> acc;

  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    const double* coeff = x.data() + V.offset(ai);
    u.values(tab, coeff);
    u.gradients(tab, coeff, cg.Jinv.data());
    acc.reset(1, nq);
    for (int q = 0; q < nq; ++q) {
      const double m = cg.detJw[q];
      if (mass_coef != 0.0) acc.v(0)[q] += mass_coef * u.v(0)[q] * m;
      for (int d = 0; d < dim; ++d) acc.g(0, d)[q] += u.g(0, d)[q] * m;
    }
    acc.flush(tab, cg.Jinv.data(), out.data() + V.offset(ai));
  }

  const auto& ifg = geom.interior_faces(rule);
  const auto& ifaces = mesh.faces().interior;
  Eval<dim> uin, uout;
  TestAcc<dim> ain, aout;
  for (size_t f = 0; f < ifaces.size(); ++f) {
    const FaceInfo<dim>& fi = ifaces[f];
    const FaceGeometry<dim>& fg = ifg[f];
    const int nqi = static_cast<int>(fg.w_ds.size());
    const auto& tin = V.trace_table(rule, fi.emb_in);
    const auto& tout = V.trace_table(rule, fi.emb_out);
    const int ai = mesh.active_index(fi.cell_in);
    const int ao = mesh.active_index(fi.cell_out);
    uin.resize(1, nqi);
    uout.resize(1, nqi);
    uin.values(tin, x.data() + V.offset(ai));
    uin.gradients(tin, x.data() + V.offset(ai), fg.Jinv_in.data());
    uout.values(tout, x.data() + V.offset(ao));
    uout.gradients(tout, x.data() + V.offset(ao), fg.Jinv_out.data());
    const double Cp = face_penalty(V, geom, fi);
    ain.reset(1, nqi);
    aout.reset(1, nqi);
    for (int q = 0; q < nqi; ++q) {
      const double w = fg.w_ds[q];
      const auto& n = fg.n[q];
      double dn_in = 0.0, dn_out = 0.0;
      for (int d = 0; d < dim; ++d) {
        dn_in += uin.g(0, d)[q] * n[d];
        dn_out += uout.g(0, d)[q] * n[d];
      }
      const double ju = uin.v(0)[q] - uout.v(0)[q];
      const double flux = (-0.5 * (dn_in + dn_out) + Cp * ju) * w;
      ain.v(0)[q] += flux;
      aout.v(0)[q] -= flux;
      const double ssym = -0.5 * ju * w;
      for (int d = 0; d < dim; ++d) {
        ain.g(0, d)[q] += ssym * n[d];
        aout.g(0, d)[q] += ssym * n[d];
      }
    }
    ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
    aout.flush(tout, fg.Jinv_out.data(), out.data() + V.offset(ao));
  }

  if (!dirichlet_bdry) return;
  const auto& bfg = geom.boundary_faces(rule);
  const auto& bfaces = mesh.faces().boundary;
  for (size_t f = 0; f < bfaces.size(); ++f) {
    const FaceInfo<dim>& fi = bfaces[f];
    const FaceGeometry<dim>& fg = bfg[f];
    const int nqi = static_cast<int>(fg.w_ds.size());
    const auto& tin = V.trace_table(rule, fi.emb_in);
    const int ai = mesh.active_index(fi.cell_in);
    uin.resize(1, nqi);
    uin.values(tin, x.data() + V.offset(ai));
    uin.gradients(tin, x.data() + V.offset(ai), fg.Jinv_in.data());
    const double sK = boundary_penalty(V, geom, fi);
    ain.reset(1, nqi);
    for (int q = 0; q < nqi; ++q) {
      const double w = fg.w_ds[q];
      const auto& n = fg.n[q];
      double dn = 0.0;
      for (int d = 0; d < dim; ++d) dn += uin.g(0, d)[q] * n[d];
      ain.v(0)[q] += (-dn + 2.0 * sK * uin.v(0)[q]) * w;
      const double ssym = -uin.v(0)[q] * w;
      for (int d = 0; d < dim; ++d) ain.g(0, d)[q] += ssym * n[d];
    }
    ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
  }
}

/// Diagonal of scalar_sip_apply (plus mass_coef mass diagonal).
template <int dim>
void scalar_sip_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                         double mass_coef, bool dirichlet_bdry, Field& diag) {
  const Mesh<dim>& mesh = geom.mesh();
  const int rule = V.degree() + 2;
  const auto& tab = V.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  const int nb = tab.nb;

  double g[dim];
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    double* d0 = diag.data() + V.offset(ai);
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (int q = 0; q < nq; ++q) {
        const double phi = tab.value_data()[b * nq + q];
        basis_phys_grad(tab, q, cg.Jinv.data(), b, g);
        double g2 = 0.0;
        for (int d = 0; d < dim; ++d) g2 += g[d] * g[d];
        s += (mass_coef * phi * phi + g2) * cg.detJw[q];
      }
      d0[b] += s;
    }
  }

  const auto& ifg = geom.interior_faces(rule);
  const auto& ifaces = mesh.faces().interior;
  for (size_t f = 0; f < ifaces.size(); ++f) {
    const FaceInfo<dim>& fi = ifaces[f];
    const FaceGeometry<dim>& fg = ifg[f];
    const int nqi = static_cast<int>(fg.w_ds.size());
    const auto& tin = V.trace_table(rule, fi.emb_in);
    const auto& tout = V.trace_table(rule, fi.emb_out);
    const double Cp = face_penalty(V, geom, fi);
    double* din = diag.data() + V.offset(mesh.active_index(fi.cell_in));
    double* dout = diag.data() + V.offset(mesh.active_index(fi.cell_out));
    for (int b = 0; b < nb; ++b) {
      double s_in = 0.0, s_out = 0.0;
      for (int q = 0; q < nqi; ++q) {
        const double w = fg.w_ds[q];
        const auto& n = fg.n[q];
        const double phi_in = tin.value_data()[b * nqi + q];
        const double phi_out = tout.value_data()[b * nqi + q];
        basis_phys_grad(tin, q, fg.Jinv_in.data(), b, g);
        double dn_in = 0.0;
        for (int d = 0; d < dim; ++d) dn_in += g[d] * n[d];
        basis_phys_grad(tout, q, fg.Jinv_out.data(), b, g);
        double dn_out = 0.0;
        for (int d = 0; d < dim; ++d) dn_out += g[d] * n[d];
        s_in += (-phi_in * dn_in + Cp * phi_in * phi_in) * w;
        s_out += (phi_out * dn_out + Cp * phi_out * phi_out) * w;
      }
      din[b] += s_in;
      dout[b] += s_out;
    }
  }

  if (!dirichlet_bdry) return;
  const auto& bfg = geom.boundary_faces(rule);
  const auto& bfaces = mesh.faces().boundary;
  for (size_t f = 0; f < bfaces.size(); ++f) {
    const FaceInfo<dim>& fi = bfaces[f];
    const FaceGeometry<dim>& fg = bfg[f];
    const int nqi = static_cast<int>(fg.w_ds.size());
    const auto& tin = V.trace_table(rule, fi.emb_in);
    const double sK = boundary_penalty(V, geom, fi);
    double* din = diag.data() + V.offset(mesh.active_index(fi.cell_in));
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (int q = 0; q < nqi; ++q) {
        const double w = fg.w_ds[q];
        const auto& n = fg.n[q];
        const double phi = tin.value_data()[b * nqi + q];
        basis_phys_grad(tin, q, fg.Jinv_in.data(), b, g);
        double dn = 0.0;
        for (int d = 0; d < dim; ++d) dn += g[d] * n[d];
        s += (-2.0 * phi * dn + 2.0 * sK * phi * phi) * w;
      }
      din[b] += s;
    }
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Mass
// ---------------------------------------------------------------------------

template <int dim>
void apply_mass(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom, const Field& x,
                Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  // Scalar spaces share the rule of the SIP operators they pair with
  // (degree+2); vector spaces use their own degree+1 rule.
  const int rule = V.degree() + (V.n_comp() == 1 ? 2 : 1);
  const auto& tab = V.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  out.assign(V.n_dofs(), 0.0);

  Eval<dim> u;
  u.resize(V.n_comp(), nq);
  TestAcc<dim> acc;
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    u.values(tab, x.data() + V.offset(ai));
    acc.reset(V.n_comp(), nq);
    for (int c = 0; c < V.n_comp(); ++c)
      for (int q = 0; q < nq; ++q) acc.v(c)[q] += u.v(c)[q] * cg.detJw[q];
    acc.flush(tab, cg.Jinv.data(), out.data() + V.offset(ai));
  }
}

template <int dim>
void mass_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom, Field& diag) {
  const Mesh<dim>& mesh = geom.mesh();
  const int rule = V.degree() + (V.n_comp() == 1 ? 2 : 1);
  const auto& tab = V.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  const int nb = tab.nb;
  diag.assign(V.n_dofs(), 0.0);
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    double* d0 = diag.data() + V.offset(ai);
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (int q = 0; q < nq; ++q) {
        const double phi = tab.value_data()[b * nq + q];
        s += phi * phi * cg.detJw[q];
      }
      for (int c = 0; c < V.n_comp(); ++c) d0[c * nb + b] += s;
    }
  }
}

// ---------------------------------------------------------------------------
// Momentum operator
// ---------------------------------------------------------------------------

template <int dim>
void apply_momentum(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                    const MomentumCtx<dim>& ctx, const Field& x, Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  const int nc = V.n_comp();
  out.assign(V.n_dofs(), 0.0);

  // --- pass A: mass + viscous (rule k+1) ---------------------------------
  if (ctx.mass_coef != 0.0 || ctx.visc_coef != 0.0) {
    const int rule = V.degree() + 1;
    const auto& tab = V.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    Eval<dim> u;
    u.resize(nc, nq);
    TestAcc<dim> acc;
    for (int ai = 0; ai < mesh.n_active(); ++ai) {
      const CellGeometry<dim>& cg = cells[ai];
      const double* coeff = x.data() + V.offset(ai);
      u.values(tab, coeff);
      if (ctx.visc_coef != 0.0) u.gradients(tab, coeff, cg.Jinv.data());
      acc.reset(nc, nq);
      for (int c = 0; c < nc; ++c)
        for (int q = 0; q < nq; ++q) {
          const double m = cg.detJw[q];
          if (ctx.mass_coef != 0.0) acc.v(c)[q] += ctx.mass_coef * u.v(c)[q] * m;
          if (ctx.visc_coef != 0.0)
            for (int d = 0; d < dim; ++d) acc.g(c, d)[q] += ctx.visc_coef * u.g(c, d)[q] * m;
        }
      acc.flush(tab, cg.Jinv.data(), out.data() + V.offset(ai));
    }

    if (ctx.visc_coef != 0.0) {
      const auto& ifg = geom.interior_faces(rule);
      const auto& ifaces = mesh.faces().interior;
      Eval<dim> uin, uout;
      TestAcc<dim> ain, aout;
      for (size_t f = 0; f < ifaces.size(); ++f) {
        const FaceInfo<dim>& fi = ifaces[f];
        const FaceGeometry<dim>& fg = ifg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = V.trace_table(rule, fi.emb_in);
        const auto& tout = V.trace_table(rule, fi.emb_out);
        const int ai = mesh.active_index(fi.cell_in);
        const int ao = mesh.active_index(fi.cell_out);
        uin.resize(nc, nqf);
        uout.resize(nc, nqf);
        uin.values(tin, x.data() + V.offset(ai));
        uin.gradients(tin, x.data() + V.offset(ai), fg.Jinv_in.data());
        uout.values(tout, x.data() + V.offset(ao));
        uout.gradients(tout, x.data() + V.offset(ao), fg.Jinv_out.data());
        const double Cu = face_penalty(V, geom, fi);
        ain.reset(nc, nqf);
        aout.reset(nc, nqf);
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          for (int c = 0; c < nc; ++c) {
            double dn_in = 0.0, dn_out = 0.0;
            for (int d = 0; d < dim; ++d) {
              dn_in += uin.g(c, d)[q] * n[d];
              dn_out += uout.g(c, d)[q] * n[d];
            }
            const double ju = uin.v(c)[q] - uout.v(c)[q];
            const double flux = ctx.visc_coef * (-0.5 * (dn_in + dn_out) + Cu * ju) * w;
            ain.v(c)[q] += flux;
            aout.v(c)[q] -= flux;
            const double ssym = -ctx.visc_coef * 0.5 * ju * w;
            for (int d = 0; d < dim; ++d) {
              ain.g(c, d)[q] += ssym * n[d];
              aout.g(c, d)[q] += ssym * n[d];
            }
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
        aout.flush(tout, fg.Jinv_out.data(), out.data() + V.offset(ao));
      }

      const auto& bfg = geom.boundary_faces(rule);
      const auto& bfaces = mesh.faces().boundary;
      for (size_t f = 0; f < bfaces.size(); ++f) {
        const FaceInfo<dim>& fi = bfaces[f];
        if (ctx.bc && ctx.bc->type(fi.boundary_id) == BcType::outlet) continue;
        const FaceGeometry<dim>& fg = bfg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = V.trace_table(rule, fi.emb_in);
        const int ai = mesh.active_index(fi.cell_in);
        uin.resize(nc, nqf);
        uin.values(tin, x.data() + V.offset(ai));
        uin.gradients(tin, x.data() + V.offset(ai), fg.Jinv_in.data());
        const double sK = boundary_penalty(V, geom, fi);
        ain.reset(nc, nqf);
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          for (int c = 0; c < nc; ++c) {
            double dn = 0.0;
            for (int d = 0; d < dim; ++d) dn += uin.g(c, d)[q] * n[d];
            ain.v(c)[q] += ctx.visc_coef * (-dn + 2.0 * sK * uin.v(c)[q]) * w;
            const double ssym = -ctx.visc_coef * uin.v(c)[q] * w;
            for (int d = 0; d < dim; ++d) ain.g(c, d)[q] += ssym * n[d];
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
      }
    }
  }

  // --- pass B: advection + skew correction (rule k+2) --------------------
  if (ctx.adv_coef != 0.0 || ctx.skew_coef != 0.0) {
    if (!ctx.advecting) throw std::runtime_error("apply_momentum: advecting field missing");
    const Field& wfield = *ctx.advecting;
    const int rule = V.degree() + 2;
    const auto& tab = V.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    Eval<dim> u, wv;
    u.resize(nc, nq);
    wv.resize(nc, nq);
    TestAcc<dim> acc;
    for (int ai = 0; ai < mesh.n_active(); ++ai) {
      const CellGeometry<dim>& cg = cells[ai];
      const double* cu = x.data() + V.offset(ai);
      const double* cw = wfield.data() + V.offset(ai);
      u.values(tab, cu);
      wv.values(tab, cw);
      if (ctx.skew_coef != 0.0) wv.gradients(tab, cw, cg.Jinv.data());
      acc.reset(nc, nq);
      for (int q = 0; q < nq; ++q) {
        const double m = cg.detJw[q];
        double divw = 0.0;
        if (ctx.skew_coef != 0.0)
          for (int d = 0; d < dim; ++d) divw += wv.g(d, d)[q];
        for (int c = 0; c < nc; ++c) {
          if (ctx.adv_coef != 0.0)
            for (int d = 0; d < dim; ++d)
              acc.g(c, d)[q] += -ctx.adv_coef * u.v(c)[q] * wv.v(d)[q] * m;
          if (ctx.skew_coef != 0.0) acc.v(c)[q] += ctx.skew_coef * divw * u.v(c)[q] * m;
        }
      }
      acc.flush(tab, cg.Jinv.data(), out.data() + V.offset(ai));
    }

    if (ctx.adv_coef != 0.0) {
      const auto& ifg = geom.interior_faces(rule);
      const auto& ifaces = mesh.faces().interior;
      Eval<dim> uin, uout, win, wout;
      TestAcc<dim> ain, aout;
      for (size_t f = 0; f < ifaces.size(); ++f) {
        const FaceInfo<dim>& fi = ifaces[f];
        const FaceGeometry<dim>& fg = ifg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = V.trace_table(rule, fi.emb_in);
        const auto& tout = V.trace_table(rule, fi.emb_out);
        const int ai = mesh.active_index(fi.cell_in);
        const int ao = mesh.active_index(fi.cell_out);
        uin.resize(nc, nqf);
        uout.resize(nc, nqf);
        win.resize(nc, nqf);
        wout.resize(nc, nqf);
        uin.values(tin, x.data() + V.offset(ai));
        uout.values(tout, x.data() + V.offset(ao));
        win.values(tin, wfield.data() + V.offset(ai));
        wout.values(tout, wfield.data() + V.offset(ao));
        ain.reset(nc, nqf);
        aout.reset(nc, nqf);
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          double wn_in = 0.0, wn_out = 0.0;
          for (int d = 0; d < dim; ++d) {
            wn_in += win.v(d)[q] * n[d];
            wn_out += wout.v(d)[q] * n[d];
          }
          const double lam = std::max(std::abs(wn_in), std::abs(wn_out));
          for (int c = 0; c < nc; ++c) {
            const double flux =
                ctx.adv_coef *
                (0.5 * (uin.v(c)[q] * wn_in + uout.v(c)[q] * wn_out) +
                 0.5 * lam * (uin.v(c)[q] - uout.v(c)[q])) *
                w;
            ain.v(c)[q] += flux;
            aout.v(c)[q] -= flux;
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
        aout.flush(tout, fg.Jinv_out.data(), out.data() + V.offset(ao));
      }

      const auto& bfg = geom.boundary_faces(rule);
      const auto& bfaces = mesh.faces().boundary;
      for (size_t f = 0; f < bfaces.size(); ++f) {
        const FaceInfo<dim>& fi = bfaces[f];
        const FaceGeometry<dim>& fg = bfg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = V.trace_table(rule, fi.emb_in);
        const int ai = mesh.active_index(fi.cell_in);
        const bool outlet = ctx.bc && ctx.bc->type(fi.boundary_id) == BcType::outlet;
        uin.resize(nc, nqf);
        win.resize(nc, nqf);
        uin.values(tin, x.data() + V.offset(ai));
        win.values(tin, wfield.data() + V.offset(ai));
        ain.reset(nc, nqf);
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          double wn = 0.0;
          for (int d = 0; d < dim; ++d) wn += win.v(d)[q] * n[d];
          const double coef = outlet ? wn : std::abs(wn);
          for (int c = 0; c < nc; ++c) ain.v(c)[q] += ctx.adv_coef * coef * uin.v(c)[q] * w;
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + V.offset(ai));
      }
    }
  }
}

template <int dim>
void momentum_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                       const MomentumCtx<dim>& ctx, Field& diag) {
  const Mesh<dim>& mesh = geom.mesh();
  const int nc = V.n_comp();
  const int nb = V.nb();
  diag.assign(V.n_dofs(), 0.0);
  double g[dim];

  // --- cell contributions -------------------------------------------------
  {
    const int rule = V.degree() + 1;
    const auto& tab = V.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    for (int ai = 0; ai < mesh.n_active(); ++ai) {
      const CellGeometry<dim>& cg = cells[ai];
      double* d0 = diag.data() + V.offset(ai);
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (int q = 0; q < nq; ++q) {
          const double phi = tab.value_data()[b * nq + q];
          double g2 = 0.0;
          if (ctx.visc_coef != 0.0) {
            basis_phys_grad(tab, q, cg.Jinv.data(), b, g);
            for (int d = 0; d < dim; ++d) g2 += g[d] * g[d];
          }
          s += (ctx.mass_coef * phi * phi + ctx.visc_coef * g2) * cg.detJw[q];
        }
        for (int c = 0; c < nc; ++c) d0[c * nb + b] += s;
      }
    }
  }
  if (ctx.adv_coef != 0.0 || ctx.skew_coef != 0.0) {
    if (!ctx.advecting) throw std::runtime_error("momentum_diagonal: advecting field missing");
    const Field& wfield = *ctx.advecting;
    const int rule = V.degree() + 2;
    const auto& tab = V.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    Eval<dim> wv;
    wv.resize(nc, nq);
    for (int ai = 0; ai < mesh.n_active(); ++ai) {
      const CellGeometry<dim>& cg = cells[ai];
      const double* cw = wfield.data() + V.offset(ai);
      wv.values(tab, cw);
      if (ctx.skew_coef != 0.0) wv.gradients(tab, cw, cg.Jinv.data());
      double* d0 = diag.data() + V.offset(ai);
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (int q = 0; q < nq; ++q) {
          const double phi = tab.value_data()[b * nq + q];
          const double m = cg.detJw[q];
          if (ctx.adv_coef != 0.0) {
            basis_phys_grad(tab, q, cg.Jinv.data(), b, g);
            double wg = 0.0;
            for (int d = 0; d < dim; ++d) wg += wv.v(d)[q] * g[d];
            s += -ctx.adv_coef * phi * wg * m;
          }
          if (ctx.skew_coef != 0.0) {
            double divw = 0.0;
            for (int d = 0; d < dim; ++d) divw += wv.g(d, d)[q];
            s += ctx.skew_coef * divw * phi * phi * m;
          }
        }
        for (int c = 0; c < nc; ++c) d0[c * nb + b] += s;
      }
    }
  }

  // --- viscous face contributions -----------------------------------------
  if (ctx.visc_coef != 0.0) {
    const int rule = V.degree() + 1;
    const auto& ifg = geom.interior_faces(rule);
    const auto& ifaces = mesh.faces().interior;
    for (size_t f = 0; f < ifaces.size(); ++f) {
      const FaceInfo<dim>& fi = ifaces[f];
      const FaceGeometry<dim>& fg = ifg[f];
      const int nqf = static_cast<int>(fg.w_ds.size());
      const auto& tin = V.trace_table(rule, fi.emb_in);
      const auto& tout = V.trace_table(rule, fi.emb_out);
      const double Cu = face_penalty(V, geom, fi);
      double* din = diag.data() + V.offset(mesh.active_index(fi.cell_in));
      double* dout = diag.data() + V.offset(mesh.active_index(fi.cell_out));
      for (int b = 0; b < nb; ++b) {
        double s_in = 0.0, s_out = 0.0;
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          const double phi_in = tin.value_data()[b * nqf + q];
          const double phi_out = tout.value_data()[b * nqf + q];
          basis_phys_grad(tin, q, fg.Jinv_in.data(), b, g);
          double dn_in = 0.0;
          for (int d = 0; d < dim; ++d) dn_in += g[d] * n[d];
          basis_phys_grad(tout, q, fg.Jinv_out.data(), b, g);
          double dn_out = 0.0;
          for (int d = 0; d < dim; ++d) dn_out += g[d] * n[d];
          s_in += ctx.visc_coef * (-phi_in * dn_in + Cu * phi_in * phi_in) * w;
          s_out += ctx.visc_coef * (phi_out * dn_out + Cu * phi_out * phi_out) * w;
        }
        for (int c = 0; c < nc; ++c) {
          din[c * nb + b] += s_in;
          dout[c * nb + b] += s_out;
        }
      }
    }

    const auto& bfg = geom.boundary_faces(rule);
    const auto& bfaces = mesh.faces().boundary;
    for (size_t f = 0; f < bfaces.size(); ++f) {
      const FaceInfo<dim>& fi = bfaces[f];
      if (ctx.bc && ctx.bc->type(fi.boundary_id) == BcType::outlet) continue;
      const FaceGeometry<dim>& fg = bfg[f];
      const int nqf = static_cast<int>(fg.w_ds.size());
      const auto& tin = V.trace_table(rule, fi.emb_in);
      const double sK = boundary_penalty(V, geom, fi);
      double* din = diag.data() + V.offset(mesh.active_index(fi.cell_in));
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          const double phi = tin.value_data()[b * nqf + q];
          basis_phys_grad(tin, q, fg.Jinv_in.data(), b, g);
          double dn = 0.0;
          for (int d = 0; d < dim; ++d) dn += g[d] * n[d];
          s += ctx.visc_coef * (-2.0 * phi * dn + 2.0 * sK * phi * phi) * w;
        }
        for (int c = 0; c < nc; ++c) din[c * nb + b] += s;
      }
    }
  }

  // --- advective face contributions ---------------------------------------
  if (ctx.adv_coef != 0.0) {
    const Field& wfield = *ctx.advecting;
    const int rule = V.degree() + 2;
    const auto& ifg = geom.interior_faces(rule);
    const auto& ifaces = mesh.faces().interior;
    Eval<dim> win, wout;
    for (size_t f = 0; f < ifaces.size(); ++f) {
      const FaceInfo<dim>& fi = ifaces[f];
      const FaceGeometry<dim>& fg = ifg[f];
      const int nqf = static_cast<int>(fg.w_ds.size());
      const auto& tin = V.trace_table(rule, fi.emb_in);
      const auto& tout = V.trace_table(rule, fi.emb_out);
      const int ai = mesh.active_index(fi.cell_in);
      const int ao = mesh.active_index(fi.cell_out);
      win.resize(nc, nqf);
      wout.resize(nc, nqf);
      win.values(tin, wfield.data() + V.offset(ai));
      wout.values(tout, wfield.data() + V.offset(ao));
      double* din = diag.data() + V.offset(ai);
      double* dout = diag.data() + V.offset(ao);
      for (int b = 0; b < nb; ++b) {
        double s_in = 0.0, s_out = 0.0;
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          double wn_in = 0.0, wn_out = 0.0;
          for (int d = 0; d < dim; ++d) {
            wn_in += win.v(d)[q] * n[d];
            wn_out += wout.v(d)[q] * n[d];
          }
          const double lam = std::max(std::abs(wn_in), std::abs(wn_out));
          const double phi_in = tin.value_data()[b * nqf + q];
          const double phi_out = tout.value_data()[b * nqf + q];
          s_in += ctx.adv_coef * (0.5 * wn_in + 0.5 * lam) * phi_in * phi_in * w;
          s_out += ctx.adv_coef * (-0.5 * wn_out + 0.5 * lam) * phi_out * phi_out * w;
        }
        for (int c = 0; c < nc; ++c) {
          din[c * nb + b] += s_in;
          dout[c * nb + b] += s_out;
        }
      }
    }

    const auto& bfg = geom.boundary_faces(rule);
    const auto& bfaces = mesh.faces().boundary;
    for (size_t f = 0; f < bfaces.size(); ++f) {
      const FaceInfo<dim>& fi = bfaces[f];
      const FaceGeometry<dim>& fg = bfg[f];
      const int nqf = static_cast<int>(fg.w_ds.size());
      const auto& tin = V.trace_table(rule, fi.emb_in);
      const int ai = mesh.active_index(fi.cell_in);
      const bool outlet = ctx.bc && ctx.bc->type(fi.boundary_id) == BcType::outlet;
      win.resize(nc, nqf);
      win.values(tin, wfield.data() + V.offset(ai));
      double* din = diag.data() + V.offset(ai);
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          double wn = 0.0;
          for (int d = 0; d < dim; ++d) wn += win.v(d)[q] * n[d];
          const double coef = outlet ? wn : std::abs(wn);
          const double phi = tin.value_data()[b * nqf + q];
          s += ctx.adv_coef * coef * phi * phi * w;
        }
        for (int c = 0; c < nc; ++c) din[c * nb + b] += s;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Momentum right-hand side
// ---------------------------------------------------------------------------

template <int dim>
void momentum_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                  const GeometryCache<dim>& geom, const MomentumRhs<dim>& spec, Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  const int nc = Vu.n_comp();
  out.assign(Vu.n_dofs(), 0.0);

  // --- linear-rule terms: mass, viscous, pressure (rule k+1) --------------
  {
    const int rule = Vu.degree() + 1;
    const auto& tab = Vu.cell_table(rule);
    const auto& ptab = Vp.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    Eval<dim> fe;
    Eval<dim> pe;
    TestAcc<dim> acc;
    for (int ai = 0; ai < mesh.n_active(); ++ai) {
      const CellGeometry<dim>& cg = cells[ai];
      acc.reset(nc, nq);
      for (const LinTerm& t : spec.mass) {
        fe.resize(nc, nq);
        fe.values(tab, t.f->data() + Vu.offset(ai));
        for (int c = 0; c < nc; ++c)
          for (int q = 0; q < nq; ++q) acc.v(c)[q] += t.coef * fe.v(c)[q] * cg.detJw[q];
      }
      for (const LinTerm& t : spec.visc) {
        fe.resize(nc, nq);
        fe.gradients(tab, t.f->data() + Vu.offset(ai), cg.Jinv.data());
        for (int c = 0; c < nc; ++c)
          for (int q = 0; q < nq; ++q)
            for (int d = 0; d < dim; ++d)
              acc.g(c, d)[q] += -t.coef * fe.g(c, d)[q] * cg.detJw[q];
      }
      for (const LinTerm& t : spec.pres) {
        pe.resize(1, nq);
        pe.values(ptab, t.f->data() + Vp.offset(ai));
        for (int c = 0; c < nc; ++c)
          for (int q = 0; q < nq; ++q) acc.g(c, c)[q] += t.coef * pe.v(0)[q] * cg.detJw[q];
      }
      acc.flush(tab, cg.Jinv.data(), out.data() + Vu.offset(ai));
    }

    if (!spec.visc.empty() || !spec.pres.empty()) {
      const auto& ifg = geom.interior_faces(rule);
      const auto& ifaces = mesh.faces().interior;
      Eval<dim> fin, fout;
      Eval<dim> pin, pout;
      TestAcc<dim> ain, aout;
      for (size_t f = 0; f < ifaces.size(); ++f) {
        const FaceInfo<dim>& fi = ifaces[f];
        const FaceGeometry<dim>& fg = ifg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = Vu.trace_table(rule, fi.emb_in);
        const auto& tout = Vu.trace_table(rule, fi.emb_out);
        const int ai = mesh.active_index(fi.cell_in);
        const int ao = mesh.active_index(fi.cell_out);
        ain.reset(nc, nqf);
        aout.reset(nc, nqf);
        for (const LinTerm& t : spec.visc) {
          fin.resize(nc, nqf);
          fout.resize(nc, nqf);
          fin.gradients(tin, t.f->data() + Vu.offset(ai), fg.Jinv_in.data());
          fout.gradients(tout, t.f->data() + Vu.offset(ao), fg.Jinv_out.data());
          for (int q = 0; q < nqf; ++q) {
            const double w = fg.w_ds[q];
            const auto& n = fg.n[q];
            for (int c = 0; c < nc; ++c) {
              double dn_in = 0.0, dn_out = 0.0;
              for (int d = 0; d < dim; ++d) {
                dn_in += fin.g(c, d)[q] * n[d];
                dn_out += fout.g(c, d)[q] * n[d];
              }
              const double flux = t.coef * 0.5 * (dn_in + dn_out) * w;
              ain.v(c)[q] += flux;
              aout.v(c)[q] -= flux;
            }
          }
        }
        for (const LinTerm& t : spec.pres) {
          const auto& ptin = Vp.trace_table(rule, fi.emb_in);
          const auto& ptout = Vp.trace_table(rule, fi.emb_out);
          pin.resize(1, nqf);
          pout.resize(1, nqf);
          pin.values(ptin, t.f->data() + Vp.offset(ai));
          pout.values(ptout, t.f->data() + Vp.offset(ao));
          for (int q = 0; q < nqf; ++q) {
            const double w = fg.w_ds[q];
            const auto& n = fg.n[q];
            const double pavg = 0.5 * (pin.v(0)[q] + pout.v(0)[q]);
            for (int c = 0; c < nc; ++c) {
              const double flux = t.coef * pavg * n[c] * w;
              ain.v(c)[q] -= flux;
              aout.v(c)[q] += flux;
            }
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + Vu.offset(ai));
        aout.flush(tout, fg.Jinv_out.data(), out.data() + Vu.offset(ao));
      }

      const auto& bfg = geom.boundary_faces(rule);
      const auto& bfaces = mesh.faces().boundary;
      for (size_t f = 0; f < bfaces.size(); ++f) {
        const FaceInfo<dim>& fi = bfaces[f];
        if (spec.bc && spec.bc->type(fi.boundary_id) == BcType::outlet) continue;
        const FaceGeometry<dim>& fg = bfg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = Vu.trace_table(rule, fi.emb_in);
        const int ai = mesh.active_index(fi.cell_in);
        ain.reset(nc, nqf);
        for (const LinTerm& t : spec.visc) {
          fin.resize(nc, nqf);
          fin.gradients(tin, t.f->data() + Vu.offset(ai), fg.Jinv_in.data());
          for (int q = 0; q < nqf; ++q) {
            const double w = fg.w_ds[q];
            const auto& n = fg.n[q];
            for (int c = 0; c < nc; ++c) {
              double dn = 0.0;
              for (int d = 0; d < dim; ++d) dn += fin.g(c, d)[q] * n[d];
              ain.v(c)[q] += t.coef * dn * w;
            }
          }
        }
        for (const LinTerm& t : spec.pres) {
          const auto& ptin = Vp.trace_table(rule, fi.emb_in);
          pin.resize(1, nqf);
          pin.values(ptin, t.f->data() + Vp.offset(ai));
          for (int q = 0; q < nqf; ++q) {
            const double w = fg.w_ds[q];
            const auto& n = fg.n[q];
            for (int c = 0; c < nc; ++c) ain.v(c)[q] -= t.coef * pin.v(0)[q] * n[c] * w;
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + Vu.offset(ai));
      }
    }
  }

  // --- advective terms and boundary data (rule k+2) -----------------------
  const bool any_dir = spec.dir_visc_coef != 0.0 || spec.dir_adv_coef != 0.0;
  if (!spec.adv.empty() || any_dir) {
    const int rule = Vu.degree() + 2;
    const auto& tab = Vu.cell_table(rule);
    const auto& cells = geom.cells(rule);
    const int nq = tab.nq;
    Eval<dim> fe, we;
    TestAcc<dim> acc;
    if (!spec.adv.empty()) {
      for (int ai = 0; ai < mesh.n_active(); ++ai) {
        const CellGeometry<dim>& cg = cells[ai];
        acc.reset(nc, nq);
        for (const AdvTerm& t : spec.adv) {
          fe.resize(nc, nq);
          we.resize(nc, nq);
          fe.values(tab, t.f->data() + Vu.offset(ai));
          we.values(tab, t.w->data() + Vu.offset(ai));
          for (int c = 0; c < nc; ++c)
            for (int q = 0; q < nq; ++q)
              for (int d = 0; d < dim; ++d)
                acc.g(c, d)[q] += t.coef * fe.v(c)[q] * we.v(d)[q] * cg.detJw[q];
        }
        acc.flush(tab, cg.Jinv.data(), out.data() + Vu.offset(ai));
      }

      const auto& ifg = geom.interior_faces(rule);
      const auto& ifaces = mesh.faces().interior;
      Eval<dim> fin, fout, win, wout;
      TestAcc<dim> ain, aout;
      for (size_t f = 0; f < ifaces.size(); ++f) {
        const FaceInfo<dim>& fi = ifaces[f];
        const FaceGeometry<dim>& fg = ifg[f];
        const int nqf = static_cast<int>(fg.w_ds.size());
        const auto& tin = Vu.trace_table(rule, fi.emb_in);
        const auto& tout = Vu.trace_table(rule, fi.emb_out);
        const int ai = mesh.active_index(fi.cell_in);
        const int ao = mesh.active_index(fi.cell_out);
        ain.reset(nc, nqf);
        aout.reset(nc, nqf);
        for (const AdvTerm& t : spec.adv) {
          fin.resize(nc, nqf);
          fout.resize(nc, nqf);
          win.resize(nc, nqf);
          wout.resize(nc, nqf);
          fin.values(tin, t.f->data() + Vu.offset(ai));
          fout.values(tout, t.f->data() + Vu.offset(ao));
          win.values(tin, t.w->data() + Vu.offset(ai));
          wout.values(tout, t.w->data() + Vu.offset(ao));
          for (int q = 0; q < nqf; ++q) {
            const double w = fg.w_ds[q];
            const auto& n = fg.n[q];
            double wn_in = 0.0, wn_out = 0.0;
            for (int d = 0; d < dim; ++d) {
              wn_in += win.v(d)[q] * n[d];
              wn_out += wout.v(d)[q] * n[d];
            }
            for (int c = 0; c < nc; ++c) {
              const double flux =
                  t.coef * 0.5 * (fin.v(c)[q] * wn_in + fout.v(c)[q] * wn_out) * w;
              ain.v(c)[q] -= flux;
              aout.v(c)[q] += flux;
            }
          }
        }
        ain.flush(tin, fg.Jinv_in.data(), out.data() + Vu.offset(ai));
        aout.flush(tout, fg.Jinv_out.data(), out.data() + Vu.offset(ao));
      }
    }

    const auto& bfg = geom.boundary_faces(rule);
    const auto& bfaces = mesh.faces().boundary;
    Eval<dim> fin, win;
    TestAcc<dim> ain;
    std::array<double, dim> gdata{};
    for (size_t f = 0; f < bfaces.size(); ++f) {
      const FaceInfo<dim>& fi = bfaces[f];
      const FaceGeometry<dim>& fg = bfg[f];
      const int nqf = static_cast<int>(fg.w_ds.size());
      const auto& tin = Vu.trace_table(rule, fi.emb_in);
      const int ai = mesh.active_index(fi.cell_in);
      const bool outlet = spec.bc && spec.bc->type(fi.boundary_id) == BcType::outlet;
      ain.reset(nc, nqf);
      for (const AdvTerm& t : spec.adv) {
        fin.resize(nc, nqf);
        win.resize(nc, nqf);
        fin.values(tin, t.f->data() + Vu.offset(ai));
        win.values(tin, t.w->data() + Vu.offset(ai));
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          double wn = 0.0;
          for (int d = 0; d < dim; ++d) wn += win.v(d)[q] * n[d];
          for (int c = 0; c < nc; ++c) ain.v(c)[q] -= t.coef * fin.v(c)[q] * wn * w;
        }
      }
      if (any_dir && !outlet) {
        const double sK = boundary_penalty(Vu, geom, fi);
        if (spec.dir_adv_coef != 0.0) {
          if (!spec.dir_w) throw std::runtime_error("momentum_rhs: dir_w missing");
          win.resize(nc, nqf);
          win.values(tin, spec.dir_w->data() + Vu.offset(ai));
        }
        for (int q = 0; q < nqf; ++q) {
          const double w = fg.w_ds[q];
          const auto& n = fg.n[q];
          if (spec.bc)
            spec.bc->eval(fi.boundary_id, fg.xq[q], spec.time, gdata.data());
          else
            gdata.fill(0.0);
          if (spec.dir_visc_coef != 0.0) {
            for (int c = 0; c < nc; ++c) {
              ain.v(c)[q] += spec.dir_visc_coef * 2.0 * sK * gdata[c] * w;
              for (int d = 0; d < dim; ++d)
                ain.g(c, d)[q] += -spec.dir_visc_coef * gdata[c] * n[d] * w;
            }
          }
          if (spec.dir_adv_coef != 0.0) {
            double wn = 0.0;
            for (int d = 0; d < dim; ++d) wn += win.v(d)[q] * n[d];
            const double lam = std::abs(wn);
            for (int c = 0; c < nc; ++c)
              ain.v(c)[q] += spec.dir_adv_coef * (lam - wn) * gdata[c] * w;
          }
        }
      }
      ain.flush(tin, fg.Jinv_in.data(), out.data() + Vu.offset(ai));
    }
  }
}

// ---------------------------------------------------------------------------
// Pressure operators
// ---------------------------------------------------------------------------

template <int dim>
void apply_pressure_helmholtz(const FunctionSpace<dim>& Vp, const GeometryCache<dim>& geom,
                              double mass_coef, const Field& x, Field& out) {
  out.assign(Vp.n_dofs(), 0.0);
  scalar_sip_apply(Vp, geom, mass_coef, /*dirichlet_bdry=*/false, x, out);
}

template <int dim>
void helmholtz_diagonal(const FunctionSpace<dim>& Vp, const GeometryCache<dim>& geom,
                        double mass_coef, Field& diag) {
  diag.assign(Vp.n_dofs(), 0.0);
  scalar_sip_diagonal(Vp, geom, mass_coef, /*dirichlet_bdry=*/false, diag);
}

template <int dim>
void apply_scalar_laplace(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                          bool dirichlet_bdry, const Field& x, Field& out) {
  out.assign(V.n_dofs(), 0.0);
  scalar_sip_apply(V, geom, 0.0, dirichlet_bdry, x, out);
}

template <int dim>
void scalar_laplace_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                             bool dirichlet_bdry, Field& diag) {
  diag.assign(V.n_dofs(), 0.0);
  scalar_sip_diagonal(V, geom, 0.0, dirichlet_bdry, diag);
}

template <int dim>
void divergence_functional(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                           const GeometryCache<dim>& geom, const Field& u,
                           const BoundaryTable<dim>* bc, Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  const int nc = Vu.n_comp();
  const int rule = Vu.degree() + 1;
  out.assign(Vp.n_dofs(), 0.0);

  const auto& tab = Vu.cell_table(rule);
  const auto& ptab = Vp.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  Eval<dim> ue;
  ue.resize(nc, nq);
  TestAcc<dim> acc;
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    ue.values(tab, u.data() + Vu.offset(ai));
    acc.reset(1, nq);
    for (int q = 0; q < nq; ++q)
      for (int d = 0; d < dim; ++d) acc.g(0, d)[q] += ue.v(d)[q] * cg.detJw[q];
    acc.flush(ptab, cg.Jinv.data(), out.data() + Vp.offset(ai));
  }

  const auto& ifg = geom.interior_faces(rule);
  const auto& ifaces = mesh.faces().interior;
  Eval<dim> uin, uout;
  TestAcc<dim> ain, aout;
  for (size_t f = 0; f < ifaces.size(); ++f) {
    const FaceInfo<dim>& fi = ifaces[f];
    const FaceGeometry<dim>& fg = ifg[f];
    const int nqf = static_cast<int>(fg.w_ds.size());
    const auto& tin = Vu.trace_table(rule, fi.emb_in);
    const auto& tout = Vu.trace_table(rule, fi.emb_out);
    const auto& ptin = Vp.trace_table(rule, fi.emb_in);
    const auto& ptout = Vp.trace_table(rule, fi.emb_out);
    const int ai = mesh.active_index(fi.cell_in);
    const int ao = mesh.active_index(fi.cell_out);
    uin.resize(nc, nqf);
    uout.resize(nc, nqf);
    uin.values(tin, u.data() + Vu.offset(ai));
    uout.values(tout, u.data() + Vu.offset(ao));
    ain.reset(1, nqf);
    aout.reset(1, nqf);
    for (int q = 0; q < nqf; ++q) {
      const double w = fg.w_ds[q];
      const auto& n = fg.n[q];
      double un = 0.0;
      for (int d = 0; d < dim; ++d) un += 0.5 * (uin.v(d)[q] + uout.v(d)[q]) * n[d];
      ain.v(0)[q] -= un * w;
      aout.v(0)[q] += un * w;
    }
    ain.flush(ptin, fg.Jinv_in.data(), out.data() + Vp.offset(ai));
    aout.flush(ptout, fg.Jinv_out.data(), out.data() + Vp.offset(ao));
  }

  const auto& bfg = geom.boundary_faces(rule);
  const auto& bfaces = mesh.faces().boundary;
  for (size_t f = 0; f < bfaces.size(); ++f) {
    const FaceInfo<dim>& fi = bfaces[f];
    if (bc && bc->type(fi.boundary_id) == BcType::outlet) continue;
    const FaceGeometry<dim>& fg = bfg[f];
    const int nqf = static_cast<int>(fg.w_ds.size());
    const auto& tin = Vu.trace_table(rule, fi.emb_in);
    const auto& ptin = Vp.trace_table(rule, fi.emb_in);
    const int ai = mesh.active_index(fi.cell_in);
    uin.resize(nc, nqf);
    uin.values(tin, u.data() + Vu.offset(ai));
    ain.reset(1, nqf);
    for (int q = 0; q < nqf; ++q) {
      const double w = fg.w_ds[q];
      const auto& n = fg.n[q];
      double un = 0.0;
      for (int d = 0; d < dim; ++d) un += uin.v(d)[q] * n[d];
      ain.v(0)[q] -= un * w;
    }
    ain.flush(ptin, fg.Jinv_in.data(), out.data() + Vp.offset(ai));
  }
}

template <int dim>
void pressure_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                  const GeometryCache<dim>& geom, double inv_adt, const Field& u,
                  double mass_coef, const Field* p_old, const BoundaryTable<dim>* bc, Field& out) {
  divergence_functional(Vu, Vp, geom, u, bc, out);
  if (inv_adt != 1.0) kern::scal(out.size(), inv_adt, out.data());
  if (p_old && mass_coef != 0.0) {
    Field mp;
    apply_mass(Vp, geom, *p_old, mp);
    kern::axpy(out.size(), mass_coef, mp.data(), out.data());
  }
}

template <int dim>
void pressure_gradient_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                           const GeometryCache<dim>& geom, const Field& p, Field& out) {
  const Mesh<dim>& mesh = geom.mesh();
  const int rule = Vu.degree() + 1;
  const auto& tab = Vu.cell_table(rule);
  const auto& ptab = Vp.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  out.assign(Vu.n_dofs(), 0.0);
  Eval<dim> pe;
  pe.resize(1, nq);
  TestAcc<dim> acc;
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    pe.gradients(ptab, p.data() + Vp.offset(ai), cg.Jinv.data());
    acc.reset(Vu.n_comp(), nq);
    for (int c = 0; c < Vu.n_comp(); ++c)
      for (int q = 0; q < nq; ++q) acc.v(c)[q] += pe.g(0, c)[q] * cg.detJw[q];
    acc.flush(tab, cg.Jinv.data(), out.data() + Vu.offset(ai));
  }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

template <int dim>
double kinetic_energy(const FunctionSpace<dim>& Vu, const GeometryCache<dim>& geom,
                      const Field& u) {
  const Mesh<dim>& mesh = geom.mesh();
  const int rule = Vu.degree() + 2;
  const auto& tab = Vu.cell_table(rule);
  const auto& cells = geom.cells(rule);
  const int nq = tab.nq;
  Eval<dim> ue;
  ue.resize(Vu.n_comp(), nq);
  double ke = 0.0;
  for (int ai = 0; ai < mesh.n_active(); ++ai) {
    const CellGeometry<dim>& cg = cells[ai];
    ue.values(tab, u.data() + Vu.offset(ai));
    for (int q = 0; q < nq; ++q) {
      double u2 = 0.0;
      for (int c = 0; c < Vu.n_comp(); ++c) u2 += ue.v(c)[q] * ue.v(c)[q];
      ke += 0.5 * u2 * cg.detJw[q];
    }
  }
  return ke;
}

// ---------------------------------------------------------------------------

#define DGNS_INSTANTIATE_FORMS(d)                                                              \
  template void apply_mass<d>(const FunctionSpace<d>&, const GeometryCache<d>&, const Field&,  \
                              Field&);                                                         \
  template void mass_diagonal<d>(const FunctionSpace<d>&, const GeometryCache<d>&, Field&);    \
  template void apply_momentum<d>(const FunctionSpace<d>&, const GeometryCache<d>&,            \
                                  const MomentumCtx<d>&, const Field&, Field&);                \
  template void momentum_diagonal<d>(const FunctionSpace<d>&, const GeometryCache<d>&,         \
                                     const MomentumCtx<d>&, Field&);                           \
  template void momentum_rhs<d>(const FunctionSpace<d>&, const FunctionSpace<d>&,              \
                                const GeometryCache<d>&, const MomentumRhs<d>&, Field&);       \
  template void apply_pressure_helmholtz<d>(const FunctionSpace<d>&, const GeometryCache<d>&,  \
                                            double, const Field&, Field&);                     \
  template void helmholtz_diagonal<d>(const FunctionSpace<d>&, const GeometryCache<d>&,        \
                                      double, Field&);                                         \
  template void apply_scalar_laplace<d>(const FunctionSpace<d>&, const GeometryCache<d>&,      \
                                        bool, const Field&, Field&);                           \
  template void scalar_laplace_diagonal<d>(const FunctionSpace<d>&, const GeometryCache<d>&,   \
                                           bool, Field&);                                      \
  template void divergence_functional<d>(const FunctionSpace<d>&, const FunctionSpace<d>&,     \
                                         const GeometryCache<d>&, const Field&,                \
                                         const BoundaryTable<d>*, Field&);                     \
  template void pressure_rhs<d>(const FunctionSpace<d>&, const FunctionSpace<d>&,              \
                                const GeometryCache<d>&, double, const Field&, double,         \
                                const Field*, const BoundaryTable<d>*, Field&);                \
  template void pressure_gradient_rhs<d>(const FunctionSpace<d>&, const FunctionSpace<d>&,     \
                                         const GeometryCache<d>&, const Field&, Field&);       \
  template double kinetic_energy<d>(const FunctionSpace<d>&, const GeometryCache<d>&,          \
                                    const Field&);

DGNS_INSTANTIATE_FORMS(2)
DGNS_INSTANTIATE_FORMS(3)

#undef DGNS_INSTANTIATE_FORMS

} // namespace dgns
