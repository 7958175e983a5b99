/// @file forms.hpp
/// @brief Matrix-free DG operators: vector mass, momentum (mass + viscous SIP
///        + Lax-Friedrichs advection + optional skew correction), pressure
///        Helmholtz, divergence/gradient couplings, and a scalar Laplacian
///        for postprocessing.
///
/// Conventions shared by all operators:
///  * Interior penalty per side: sigma_K = (deg+1)^2 * diam(F) / diam(K); the
///    face coefficient is the mean of the two sides, and boundary faces use
///    2 * sigma_K in the penalty (ghost-state convention).
///  * Face normals, quadrature weights and embeddings come from the owner
///    side of each face record (GeometryCache).
///  * Jumps are owner-minus-neighbor; the normal points owner -> neighbor.
///  * Quadrature: bilinear/linear forms use k+1 points per direction,
///    advection and boundary-data functionals use k+2 (k = space degree of
///    the velocity).

#pragma once

#include "space.hpp"

#include <functional>
#include <map>

namespace dgns {

enum class BcType { dirichlet, outlet };

/// Boundary condition lookup by boundary id.
template <int dim>
struct BoundaryTable {
  struct Entry {
    BcType type = BcType::dirichlet;
    /// Prescribed velocity (n_comp values) at (x, t); null means zero.
    std::function<void(const std::array<double, dim>&, double, double*)> value;
  };
  std::map<int, Entry> entries;

  BcType type(int id) const {
    auto it = entries.find(id);
    return it == entries.end() ? BcType::dirichlet : it->second.type;
  }
  void eval(int id, const std::array<double, dim>& x, double t, double* out) const {
    auto it = entries.find(id);
    if (it == entries.end() || !it->second.value) {
      for (int d = 0; d < dim; ++d) out[d] = 0.0;
      return;
    }
    it->second.value(x, t, out);
  }
};

/// Coefficients of the implicit momentum operator
///   mass_coef * (u, v) + visc_coef * a_sip(u, v)
///   + adv_coef * c_lf(w; u, v) + skew_coef * ((div w) u, v).
template <int dim>
struct MomentumCtx {
  double mass_coef = 0.0;
  double visc_coef = 0.0;
  double adv_coef = 0.0;
  double skew_coef = 0.0;
  const Field* advecting = nullptr;        ///< w; required when adv or skew is active
  const BoundaryTable<dim>* bc = nullptr;  ///< required when visc or adv is active
};

/// One explicit functional term: coef * (operator applied to field f).
struct LinTerm {
  double coef;
  const Field* f;
};
/// Advective functional term: f transported by w.
struct AdvTerm {
  double coef;
  const Field* f;
  const Field* w;
};

/// Right-hand-side specification of a momentum solve.  Each list contributes
///   mass: coef * (f, v)
///   visc: coef * [ -(grad f, grad v) + sum_faces <{{grad f}} n, [[v]]> ]
///   adv : coef * [ ((f x w), grad v) - sum_faces <{{f x w}} n, [[v]]> ]
///   pres: coef * [ (p, div v) - sum_faces <{{p}} n, [[v]]> ]
/// where boundary faces use interior traces and [[v]] = v^+.  Dirichlet data
/// g enters with
///   dir_visc_coef * [ -(g x n) : grad v + 2 sigma_K g . v ]
///   dir_adv_coef  * [ -((g x w) n) . v + |w.n| g . v ]
/// on Dirichlet faces.  Outlet faces skip the viscous and pressure boundary
/// fluxes and all data terms.
template <int dim>
struct MomentumRhs {
  std::vector<LinTerm> mass;
  std::vector<LinTerm> visc;
  std::vector<AdvTerm> adv;
  std::vector<LinTerm> pres;  ///< fields living in the pressure space
  double dir_visc_coef = 0.0;
  double dir_adv_coef = 0.0;
  const Field* dir_w = nullptr;  ///< advecting field for the boundary data terms
  double time = 0.0;             ///< boundary data evaluation time
  const BoundaryTable<dim>* bc = nullptr;
};

// ---------------------------------------------------------------------------
// Velocity-space operators
// ---------------------------------------------------------------------------
template <int dim>
void apply_mass(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom, const Field& x,
                Field& out);
template <int dim>
void mass_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom, Field& diag);

template <int dim>
void apply_momentum(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                    const MomentumCtx<dim>& ctx, const Field& x, Field& out);
template <int dim>
void momentum_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                       const MomentumCtx<dim>& ctx, Field& diag);

template <int dim>
void momentum_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                  const GeometryCache<dim>& geom, const MomentumRhs<dim>& spec, Field& out);

// ---------------------------------------------------------------------------
// Pressure-space operators
// ---------------------------------------------------------------------------
/// mass_coef * (p, q) + interior-only SIP Laplacian (natural boundary).
template <int dim>
void apply_pressure_helmholtz(const FunctionSpace<dim>& Vp, const GeometryCache<dim>& geom,
                              double mass_coef, const Field& x, Field& out);
template <int dim>
void helmholtz_diagonal(const FunctionSpace<dim>& Vp, const GeometryCache<dim>& geom,
                        double mass_coef, Field& diag);

/// Weak divergence functional of a velocity field against pressure tests:
///   B(u)_i = (u, grad q_i) - sum_faces <{{u}} . n, [[q_i]]>,
/// boundary faces (except outlets) with interior traces.
template <int dim>
void divergence_functional(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                           const GeometryCache<dim>& geom, const Field& u,
                           const BoundaryTable<dim>* bc, Field& out);

/// out = inv_adt * B(u) + mass_coef * M_p p_old  (p_old may be null).
template <int dim>
void pressure_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                  const GeometryCache<dim>& geom, double inv_adt, const Field& u,
                  double mass_coef, const Field* p_old, const BoundaryTable<dim>* bc, Field& out);

/// Cellwise gradient coupling: out_i = (grad p, phi_i) over cells (no faces).
template <int dim>
void pressure_gradient_rhs(const FunctionSpace<dim>& Vu, const FunctionSpace<dim>& Vp,
                           const GeometryCache<dim>& geom, const Field& p, Field& out);

// ---------------------------------------------------------------------------
// Scalar SIP Laplacian (streamfunction and similar postprocessing solves)
// ---------------------------------------------------------------------------
/// Interior SIP; if dirichlet_bdry, boundary faces carry homogeneous
/// Dirichlet penalty/consistency terms, otherwise they are natural.
template <int dim>
void apply_scalar_laplace(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                          bool dirichlet_bdry, const Field& x, Field& out);
template <int dim>
void scalar_laplace_diagonal(const FunctionSpace<dim>& V, const GeometryCache<dim>& geom,
                             bool dirichlet_bdry, Field& diag);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------
/// Kinetic energy 1/2 int |u|^2.
template <int dim>
double kinetic_energy(const FunctionSpace<dim>& Vu, const GeometryCache<dim>& geom,
                      const Field& u);

/// Penalty weight of one side: (deg+1)^2 * measure(F) / measure(K).
/// The measure ratio scales as 1/h in any dimension, which the interior
/// penalty method needs for coercivity.
inline double sip_sigma(int deg, double face_measure, double cell_measure) {
  return (deg + 1) * (deg + 1) * face_measure / cell_measure;
}

} // namespace dgns
