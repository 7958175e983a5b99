#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "forms.hpp"
#include "mesh.hpp"
#include "space.hpp"

#include "support/dense_oracle.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

using namespace dgns;

namespace {

Field random_field(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Field f(n);
  for (double& v : f) v = dist(gen);
  return f;
}

/// Materialize a square matrix-free operator by applying it to unit vectors.
oracle::Mat materialize(int n, const std::function<void(const Field&, Field&)>& apply) {
  oracle::Mat A(n, n);
  Field e(n, 0.0), y;
  for (int j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    apply(e, y);
    for (int i = 0; i < n; ++i) A(i, j) = y[i];
  }
  return A;
}

oracle::Mat materialize_rect(int m, int n, const std::function<void(const Field&, Field&)>& apply) {
  oracle::Mat A(m, n);
  Field e(n, 0.0), y;
  for (int j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    apply(e, y);
    for (int i = 0; i < m; ++i) A(i, j) = y[i];
  }
  return A;
}

double max_diff(const oracle::Mat& A, const oracle::Mat& B) {
  REQUIRE(A.m == B.m);
  REQUIRE(A.n == B.n);
  double r = 0.0;
  for (size_t i = 0; i < A.a.size(); ++i) r = std::max(r, std::abs(A.a[i] - B.a[i]));
  return r;
}

double max_diff(const Field& a, const Field& b) {
  REQUIRE(a.size() == b.size());
  double r = 0.0;
  for (size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

template <int dim>
Mesh<dim> small_distorted_mesh() {
  std::array<double, dim> lo{}, hi{};
  hi.fill(1.0);
  Mesh<dim> mesh = generate_cartesian<dim>(2, lo, hi);
  distort(mesh, dim == 2 ? 0.05 : 0.03, 7u);
  return mesh;
}

} // namespace

TEST_CASE("momentum operator matches dense assembly in 2d") {
  Mesh<2> mesh = small_distorted_mesh<2>();
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;

  for (int k : {2, 3}) {
    CAPTURE(k);
    FunctionSpace<2> Vu(mesh, k, 2);
    const Field w = random_field(Vu.n_dofs(), 11u + k);
    MomentumCtx<2> ctx;
    ctx.mass_coef = 3.7;
    ctx.visc_coef = 1.3;
    ctx.adv_coef = 0.9;
    ctx.skew_coef = -0.45;
    ctx.advecting = &w;
    ctx.bc = &bc;

    const oracle::Mat A_mf = materialize(
        Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx, x, y); });
    const oracle::Mat A_dense = oracle::momentum_matrix(Vu, ctx, k + 1, k + 2);
    CHECK(max_diff(A_mf, A_dense) <= 1e-12);

    Field diag;
    momentum_diagonal(Vu, geom, ctx, diag);
    double dd = 0.0;
    for (int i = 0; i < Vu.n_dofs(); ++i) dd = std::max(dd, std::abs(diag[i] - A_dense(i, i)));
    CHECK(dd <= 1e-12);

    // mass operator alone
    const oracle::Mat M_mf = materialize(
        Vu.n_dofs(), [&](const Field& x, Field& y) { apply_mass(Vu, geom, x, y); });
    const oracle::Mat M_dense = oracle::mass_matrix(Vu, k + 1);
    CHECK(max_diff(M_mf, M_dense) <= 1e-12);
    Field mdiag;
    mass_diagonal(Vu, geom, mdiag);
    dd = 0.0;
    for (int i = 0; i < Vu.n_dofs(); ++i) dd = std::max(dd, std::abs(mdiag[i] - M_dense(i, i)));
    CHECK(dd <= 1e-12);
  }
}

TEST_CASE("momentum operator matches dense assembly in 3d") {
  Mesh<3> mesh = small_distorted_mesh<3>();
  GeometryCache<3> geom(mesh);
  BoundaryTable<3> bc;
  FunctionSpace<3> Vu(mesh, 2, 3);
  const Field w = random_field(Vu.n_dofs(), 23u);
  MomentumCtx<3> ctx;
  ctx.mass_coef = 2.1;
  ctx.visc_coef = 0.8;
  ctx.adv_coef = 1.1;
  ctx.skew_coef = -0.5;
  ctx.advecting = &w;
  ctx.bc = &bc;

  const oracle::Mat A_mf = materialize(
      Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx, x, y); });
  const oracle::Mat A_dense = oracle::momentum_matrix(Vu, ctx, 3, 4);
  CHECK(max_diff(A_mf, A_dense) <= 1e-12);

  Field diag;
  momentum_diagonal(Vu, geom, ctx, diag);
  double dd = 0.0;
  for (int i = 0; i < Vu.n_dofs(); ++i) dd = std::max(dd, std::abs(diag[i] - A_dense(i, i)));
  CHECK(dd <= 1e-12);
}

TEST_CASE("operators on a mesh with hanging faces match dense assembly") {
  Mesh<2> mesh = generate_cartesian<2>(2, {0.0, 0.0}, {1.0, 1.0});
  mesh.refine_and_coarsen({0}, {});
  REQUIRE(mesh.n_active() == 7);
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;
  FunctionSpace<2> Vu(mesh, 2, 2);
  const Field w = random_field(Vu.n_dofs(), 31u);
  MomentumCtx<2> ctx;
  ctx.mass_coef = 1.9;
  ctx.visc_coef = 1.1;
  ctx.adv_coef = 0.7;
  ctx.skew_coef = 0.0;
  ctx.advecting = &w;
  ctx.bc = &bc;

  const oracle::Mat A_mf = materialize(
      Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx, x, y); });
  const oracle::Mat A_dense = oracle::momentum_matrix(Vu, ctx, 3, 4);
  CHECK(max_diff(A_mf, A_dense) <= 1e-12);

  FunctionSpace<2> Vp(mesh, 1, 1);
  const oracle::Mat H_mf = materialize(Vp.n_dofs(), [&](const Field& x, Field& y) {
    apply_pressure_helmholtz(Vp, geom, 2.3, x, y);
  });
  const oracle::Mat H_dense = oracle::scalar_sip_matrix(Vp, 2.3, false, 3);
  CHECK(max_diff(H_mf, H_dense) <= 1e-12);

  const oracle::Mat B_mf =
      materialize_rect(Vp.n_dofs(), Vu.n_dofs(), [&](const Field& x, Field& y) {
        divergence_functional(Vu, Vp, geom, x, &bc, y);
      });
  const oracle::Mat B_dense = oracle::divergence_matrix(Vu, Vp, &bc, 3);
  CHECK(max_diff(B_mf, B_dense) <= 1e-12);
}

TEST_CASE("pressure helmholtz and scalar laplacian match dense assembly") {
  Mesh<2> mesh = small_distorted_mesh<2>();
  GeometryCache<2> geom(mesh);

  for (int k : {2, 3}) {
    CAPTURE(k);
    FunctionSpace<2> Vp(mesh, k - 1, 1);
    const double mc = 2.3;
    const oracle::Mat H_mf = materialize(Vp.n_dofs(), [&](const Field& x, Field& y) {
      apply_pressure_helmholtz(Vp, geom, mc, x, y);
    });
    const oracle::Mat H_dense = oracle::scalar_sip_matrix(Vp, mc, false, k + 1);
    CHECK(max_diff(H_mf, H_dense) <= 1e-12);
    CHECK(H_dense.max_asymmetry() <= 1e-12);
    CHECK(H_mf.max_asymmetry() <= 1e-12);

    Field hd;
    helmholtz_diagonal(Vp, geom, mc, hd);
    double dd = 0.0;
    for (int i = 0; i < Vp.n_dofs(); ++i) dd = std::max(dd, std::abs(hd[i] - H_dense(i, i)));
    CHECK(dd <= 1e-12);
  }

  // streamfunction-style scalar solve: full degree, Dirichlet boundary
  FunctionSpace<2> Vs(mesh, 2, 1);
  const oracle::Mat L_mf = materialize(Vs.n_dofs(), [&](const Field& x, Field& y) {
    apply_scalar_laplace(Vs, geom, true, x, y);
  });
  const oracle::Mat L_dense = oracle::scalar_sip_matrix(Vs, 0.0, true, 4);
  CHECK(max_diff(L_mf, L_dense) <= 1e-12);
  CHECK(L_mf.max_asymmetry() <= 1e-12);
  Field ld;
  scalar_laplace_diagonal(Vs, geom, true, ld);
  double dd = 0.0;
  for (int i = 0; i < Vs.n_dofs(); ++i) dd = std::max(dd, std::abs(ld[i] - L_dense(i, i)));
  CHECK(dd <= 1e-12);
}

TEST_CASE("viscous part of the momentum operator is symmetric") {
  Mesh<2> mesh = small_distorted_mesh<2>();
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;
  FunctionSpace<2> Vu(mesh, 2, 2);
  MomentumCtx<2> ctx;
  ctx.mass_coef = 0.7;
  ctx.visc_coef = 1.0;
  ctx.bc = &bc;
  const oracle::Mat A = materialize(
      Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx, x, y); });
  CHECK(A.max_asymmetry() <= 1e-12);
}

TEST_CASE("divergence and gradient couplings match dense assembly") {
  Mesh<2> mesh = small_distorted_mesh<2>();
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;
  FunctionSpace<2> Vu(mesh, 2, 2);
  FunctionSpace<2> Vp(mesh, 1, 1);

  const oracle::Mat B_mf =
      materialize_rect(Vp.n_dofs(), Vu.n_dofs(), [&](const Field& x, Field& y) {
        divergence_functional(Vu, Vp, geom, x, &bc, y);
      });
  const oracle::Mat B_dense = oracle::divergence_matrix(Vu, Vp, &bc, 3);
  CHECK(max_diff(B_mf, B_dense) <= 1e-12);

  const oracle::Mat P_mf =
      materialize_rect(Vu.n_dofs(), Vp.n_dofs(), [&](const Field& x, Field& y) {
        pressure_gradient_rhs(Vu, Vp, geom, x, y);
      });
  const oracle::Mat P_dense = oracle::gradient_matrix(Vu, Vp, 3);
  CHECK(max_diff(P_mf, P_dense) <= 1e-12);
}

TEST_CASE("momentum right-hand side matches dense assembly") {
  Mesh<2> mesh = small_distorted_mesh<2>();
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;
  for (int id = 0; id < 4; ++id) {
    bc.entries[id].type = BcType::dirichlet;
    bc.entries[id].value = [](const std::array<double, 2>& x, double t, double* out) {
      out[0] = std::sin(2.0 * x[0] + t) * std::cos(x[1]);
      out[1] = x[0] * x[0] - std::cos(t) * x[1];
    };
  }
  const int k = 2;
  FunctionSpace<2> Vu(mesh, k, 2);
  FunctionSpace<2> Vp(mesh, k - 1, 1);
  const Field un = random_field(Vu.n_dofs(), 41u);
  const Field ug = random_field(Vu.n_dofs(), 42u);
  const Field wx = random_field(Vu.n_dofs(), 43u);
  const Field pp = random_field(Vp.n_dofs(), 44u);
  const double t = 0.37;

  MomentumRhs<2> spec;
  spec.mass = {{2.9, &un}};
  spec.visc = {{0.65, &un}, {0.3, &ug}};
  spec.adv = {{0.5, &un, &wx}, {0.25, &ug, &ug}};
  spec.pres = {{1.0, &pp}};
  spec.dir_visc_coef = 0.65;
  spec.dir_adv_coef = 0.5;
  spec.dir_w = &wx;
  spec.time = t;
  spec.bc = &bc;

  Field F;
  momentum_rhs(Vu, Vp, geom, spec, F);

  const oracle::Mat M = oracle::mass_matrix(Vu, k + 1);
  const oracle::Mat K = oracle::visc_expl_matrix(Vu, &bc, k + 1);
  const oracle::Mat Cw = oracle::adv_expl_matrix(Vu, wx, k + 2);
  const oracle::Mat Cg = oracle::adv_expl_matrix(Vu, ug, k + 2);
  const oracle::Mat G = oracle::pres_expl_matrix(Vu, Vp, &bc, k + 1);
  const std::vector<double> d =
      oracle::dirichlet_data_vector(Vu, bc, t, 0.65, 0.5, &wx, k + 2);

  Field F_ref(Vu.n_dofs(), 0.0);
  auto acc = [&](const std::vector<double>& v, double c) {
    for (int i = 0; i < Vu.n_dofs(); ++i) F_ref[i] += c * v[i];
  };
  acc(M.mul(un), 2.9);
  acc(K.mul(un), 0.65);
  acc(K.mul(ug), 0.3);
  acc(Cw.mul(un), 0.5);
  acc(Cg.mul(ug), 0.25);
  acc(G.mul(pp), 1.0);
  acc(d, 1.0);

  CHECK(max_diff(F, F_ref) <= 1e-12);
}

TEST_CASE("outlet faces drop viscous and pressure boundary terms") {
  Mesh<2> mesh = generate_cartesian<2>(2, {0.0, 0.0}, {1.0, 1.0});
  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc_out;
  bc_out.entries[1].type = BcType::outlet;  // x+ side
  BoundaryTable<2> bc_dir;

  FunctionSpace<2> Vu(mesh, 2, 2);
  FunctionSpace<2> Vp(mesh, 1, 1);
  const Field w = random_field(Vu.n_dofs(), 51u);

  MomentumCtx<2> ctx;
  ctx.mass_coef = 1.0;
  ctx.visc_coef = 0.9;
  ctx.adv_coef = 0.8;
  ctx.advecting = &w;
  ctx.bc = &bc_out;

  const oracle::Mat A_mf = materialize(
      Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx, x, y); });
  const oracle::Mat A_dense = oracle::momentum_matrix(Vu, ctx, 3, 4);
  CHECK(max_diff(A_mf, A_dense) <= 1e-12);

  Field diag;
  momentum_diagonal(Vu, geom, ctx, diag);
  double dd = 0.0;
  for (int i = 0; i < Vu.n_dofs(); ++i) dd = std::max(dd, std::abs(diag[i] - A_dense(i, i)));
  CHECK(dd <= 1e-12);

  MomentumCtx<2> ctx_dir = ctx;
  ctx_dir.bc = &bc_dir;
  const oracle::Mat A_all = materialize(
      Vu.n_dofs(), [&](const Field& x, Field& y) { apply_momentum(Vu, geom, ctx_dir, x, y); });
  CHECK(max_diff(A_mf, A_all) > 1e-3);  // the switch must change the operator

  const oracle::Mat B_mf =
      materialize_rect(Vp.n_dofs(), Vu.n_dofs(), [&](const Field& x, Field& y) {
        divergence_functional(Vu, Vp, geom, x, &bc_out, y);
      });
  const oracle::Mat B_dense = oracle::divergence_matrix(Vu, Vp, &bc_out, 3);
  CHECK(max_diff(B_mf, B_dense) <= 1e-12);

  // rhs with a pressure term: outlet must drop its boundary flux
  MomentumRhs<2> spec;
  const Field pp = random_field(Vp.n_dofs(), 52u);
  spec.pres = {{1.0, &pp}};
  spec.bc = &bc_out;
  Field F;
  momentum_rhs(Vu, Vp, geom, spec, F);
  const oracle::Mat G = oracle::pres_expl_matrix(Vu, Vp, &bc_out, 3);
  CHECK(max_diff(F, G.mul(pp)) <= 1e-12);
}

// On affine cells every face integrand is polynomial and the operator and
// boundary-data quadratures (degree+1 vs degree+2) are both exact, so the
// residual is pure roundoff.  On distorted cells the symmetry/data terms have
// rational integrands and the two rules differ by a small quadrature error.
static void check_free_stream(Mesh<2>& mesh, double tol) {
  const double gamma = 2.0 - std::sqrt(2.0);
  const double dt = 0.2;
  const double nu = 0.01;
  const std::array<double, 2> u0{1.7, -0.6};

  GeometryCache<2> geom(mesh);
  BoundaryTable<2> bc;
  for (int id = 0; id < 4; ++id)
    bc.entries[id].value = [u0](const std::array<double, 2>&, double, double* out) {
      out[0] = u0[0];
      out[1] = u0[1];
    };

  FunctionSpace<2> Vu(mesh, 2, 2);
  FunctionSpace<2> Vp(mesh, 1, 1);
  Field uc(Vu.n_dofs());
  Vu.interpolate([&](const std::array<double, 2>&, double* v) {
    v[0] = u0[0];
    v[1] = u0[1];
  }, uc);
  Field pz(Vp.n_dofs(), 0.0);

  MomentumCtx<2> ctx;
  ctx.mass_coef = 1.0 / (gamma * dt);
  ctx.visc_coef = 0.5 * nu;
  ctx.adv_coef = 0.5;
  ctx.advecting = &uc;
  ctx.bc = &bc;
  Field lhs;
  apply_momentum(Vu, geom, ctx, uc, lhs);

  MomentumRhs<2> spec;
  spec.mass = {{1.0 / (gamma * dt), &uc}};
  spec.visc = {{0.5 * nu, &uc}};
  spec.adv = {{0.5, &uc, &uc}};
  spec.pres = {{1.0, &pz}};
  spec.dir_visc_coef = 0.5 * nu;
  spec.dir_adv_coef = 0.5;
  spec.dir_w = &uc;
  spec.time = 0.0;
  spec.bc = &bc;
  Field rhs;
  momentum_rhs(Vu, Vp, geom, spec, rhs);

  CHECK(max_diff(lhs, rhs) <= tol);

  // the projection right-hand side of a uniform field vanishes as well
  Field prhs;
  pressure_rhs(Vu, Vp, geom, 1.0 / (gamma * dt), uc, 7.3, &pz, &bc, prhs);
  double r = 0.0;
  for (double v : prhs) r = std::max(r, std::abs(v));
  CHECK(r <= tol);
}

TEST_CASE("uniform flow is annihilated by the stage operator") {
  SUBCASE("cartesian mesh, exact cancellation") {
    Mesh<2> mesh = generate_cartesian<2>(2, {0.0, 0.0}, {1.2, 0.8});
    check_free_stream(mesh, 1e-12);
  }
  SUBCASE("distorted mesh, quadrature-limited cancellation") {
    Mesh<2> mesh = small_distorted_mesh<2>();
    check_free_stream(mesh, 1e-9);
  }
}
