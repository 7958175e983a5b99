#include "krylov.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kernels.hpp"

namespace dgns {

namespace {

double norm2(std::size_t n, const double* v) {
  return std::sqrt(kern::dot(n, v, v));
}

/// r = b - A*x
void true_residual(std::size_t n, const LinearOp& A, const double* b,
                   const double* x, std::vector<double>& scratch, double* r) {
  scratch.resize(n);
  A(x, scratch.data());
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - scratch[i];
}

}  // namespace

JacobiPreconditioner::JacobiPreconditioner(const std::vector<double>& diag) {
  inv_diag_.resize(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) {
    if (diag[i] == 0.0)
      throw SolverError("jacobi preconditioner: zero diagonal at dof " +
                            std::to_string(i),
                        {});
    inv_diag_[i] = 1.0 / diag[i];
  }
}

void JacobiPreconditioner::apply(const double* r, double* z) const {
  const std::size_t n = inv_diag_.size();
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] * inv_diag_[i];
}

SolveResult cg_solve(std::size_t n, const LinearOp& A, const double* b,
                     const SolverSettings& s, const JacobiPreconditioner* M,
                     double* x) {
  const double bnorm = norm2(n, b);
  if (bnorm == 0.0) {
    std::fill(x, x + n, 0.0);
    return {0, 0.0};
  }
  const double tol = std::max(s.rel_tol * bnorm, s.abs_tol);

  std::vector<double> r(n), z(n), p(n), q(n), scratch;
  std::vector<double> history;
  int iter = 0;

  // Outer loop recomputes the true residual so the convergence claim does not
  // rest on the recurrence alone.
  while (true) {
    true_residual(n, A, b, x, scratch, r.data());
    double rnorm = norm2(n, r.data());
    if (rnorm <= tol) return {iter, rnorm};
    if (iter >= s.max_iter)
      throw SolverError("cg: no convergence in " + std::to_string(s.max_iter) +
                            " iterations (residual " + std::to_string(rnorm) +
                            ")",
                        std::move(history));

    double rho_old = 0.0;
    bool first = true;
    while (iter < s.max_iter) {
      if (M)
        M->apply(r.data(), z.data());
      else
        std::memcpy(z.data(), r.data(), n * sizeof(double));
      const double rho = kern::dot(n, r.data(), z.data());
      if (rho == 0.0)
        throw SolverError("cg: breakdown, <r,z> = 0", std::move(history));
      if (first) {
        std::memcpy(p.data(), z.data(), n * sizeof(double));
        first = false;
      } else {
        kern::axpby(n, 1.0, z.data(), rho / rho_old, p.data());
      }
      rho_old = rho;
      A(p.data(), q.data());
      const double pq = kern::dot(n, p.data(), q.data());
      if (pq <= 0.0)
        throw SolverError("cg: operator not positive definite, <p,Ap> <= 0",
                          std::move(history));
      const double alpha = rho / pq;
      kern::axpy(n, alpha, p.data(), x);
      kern::axpy(n, -alpha, q.data(), r.data());
      ++iter;
      rnorm = norm2(n, r.data());
      history.push_back(rnorm);
      if (rnorm <= tol) break;
    }
    // fall through to the outer true-residual check
  }
}

SolveResult gmres_solve(std::size_t n, const LinearOp& A, const double* b,
                        const SolverSettings& s, const JacobiPreconditioner* M,
                        double* x) {
  const double bnorm = norm2(n, b);
  if (bnorm == 0.0) {
    std::fill(x, x + n, 0.0);
    return {0, 0.0};
  }
  const double tol = std::max(s.rel_tol * bnorm, s.abs_tol);
  const int m = std::max(1, s.restart);

  std::vector<std::vector<double>> V;  // Krylov basis, grown on demand
  std::vector<double> H((m + 1) * m, 0.0);
  std::vector<double> cs(m), sn(m), g(m + 1);
  std::vector<double> z(n), w(n), r(n), scratch;
  std::vector<double> history;
  int iter = 0;

  const auto row = [&](int i, int j) -> double& { return H[i * m + j]; };

  while (true) {
    true_residual(n, A, b, x, scratch, r.data());
    const double beta = norm2(n, r.data());
    if (beta <= tol) return {iter, beta};
    if (iter >= s.max_iter)
      throw SolverError("gmres: no convergence in " +
                            std::to_string(s.max_iter) +
                            " iterations (residual " + std::to_string(beta) +
                            ")",
                        std::move(history));

    if (V.empty()) V.emplace_back(n);
    std::memcpy(V[0].data(), r.data(), n * sizeof(double));
    kern::scal(n, 1.0 / beta, V[0].data());
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::fill(H.begin(), H.end(), 0.0);

    int k = 0;  // columns built this cycle
    double res = beta;
    while (k < m && iter < s.max_iter) {
      // w = A M^{-1} v_k  (right preconditioning)
      if (M)
        M->apply(V[k].data(), z.data());
      else
        std::memcpy(z.data(), V[k].data(), n * sizeof(double));
      A(z.data(), w.data());
      ++iter;

      // modified Gram-Schmidt
      for (int i = 0; i <= k; ++i) {
        const double h = kern::dot(n, w.data(), V[i].data());
        row(i, k) = h;
        kern::axpy(n, -h, V[i].data(), w.data());
      }
      const double hk1 = norm2(n, w.data());
      row(k + 1, k) = hk1;

      // apply the accumulated Givens rotations to the new column
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * row(i, k) + sn[i] * row(i + 1, k);
        row(i + 1, k) = -sn[i] * row(i, k) + cs[i] * row(i + 1, k);
        row(i, k) = t;
      }
      const double denom = std::hypot(row(k, k), row(k + 1, k));
      if (denom == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else {
        cs[k] = row(k, k) / denom;
        sn[k] = row(k + 1, k) / denom;
      }
      row(k, k) = denom;
      row(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];

      res = std::abs(g[k + 1]);
      history.push_back(res);
      ++k;
      if (res <= tol || hk1 == 0.0) break;
      if (k < m && static_cast<int>(V.size()) <= k) V.emplace_back(n);
      if (k < m) {
        std::memcpy(V[k].data(), w.data(), n * sizeof(double));
        kern::scal(n, 1.0 / hk1, V[k].data());
      }
    }

    // back-substitute H(0:k,0:k) y = g and update x += M^{-1} (V y)
    std::vector<double> y(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
      double t = g[i];
      for (int j = i + 1; j < k; ++j) t -= row(i, j) * y[j];
      y[i] = t / row(i, i);
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int j = 0; j < k; ++j) kern::axpy(n, y[j], V[j].data(), w.data());
    if (M)
      M->apply(w.data(), z.data());
    else
      std::memcpy(z.data(), w.data(), n * sizeof(double));
    kern::axpy(n, 1.0, z.data(), x);
    // loop back: the outer check recomputes the true residual
  }
}

}  // namespace dgns
