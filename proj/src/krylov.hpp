/// @file krylov.hpp
/// @brief Matrix-free iterative solvers: preconditioned CG and restarted GMRES.
///
/// Both solvers work on abstract operators (a callable computing y = A*x), use
/// the incoming solution vector as the initial guess, and stop when the true
/// residual satisfies ||b - A*x|| <= max(rel_tol*||b||, abs_tol).  The residual
/// they report is recomputed from the final iterate, not the recurrence value,
/// so it can be checked independently.  Exceeding the iteration budget raises
/// SolverError carrying the per-iteration residual history.

#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgns {

/// y = A*x for a square operator; x and y never alias.
using LinearOp = std::function<void(const double* x, double* y)>;

struct SolverSettings {
  double rel_tol = 1e-10;  ///< relative to ||rhs||
  double abs_tol = 0.0;    ///< absolute floor on the residual
  int max_iter = 10000;    ///< total operator applications allowed
  int restart = 50;        ///< GMRES restart length (>= 1)
};

/// Raised when a solver exhausts max_iter (or the iteration breaks down).
struct SolverError : std::runtime_error {
  std::vector<double> history;  ///< residual norm after each iteration
  SolverError(const std::string& msg, std::vector<double> h)
      : std::runtime_error(msg), history(std::move(h)) {}
};

/// Componentwise division by the operator diagonal.
/// Construction throws SolverError naming the first dof whose diagonal is zero.
class JacobiPreconditioner {
 public:
  explicit JacobiPreconditioner(const std::vector<double>& diag);
  void apply(const double* r, double* z) const;
  std::size_t size() const { return inv_diag_.size(); }

 private:
  std::vector<double> inv_diag_;
};

struct SolveResult {
  int iterations = 0;     ///< operator applications performed
  double residual = 0.0;  ///< ||b - A*x|| recomputed at exit
};

/// Preconditioned conjugate gradient; A must be symmetric positive definite.
/// x holds the initial guess on entry and the solution on return.
/// Pass M = nullptr for the unpreconditioned iteration.
SolveResult cg_solve(std::size_t n, const LinearOp& A, const double* b,
                     const SolverSettings& s, const JacobiPreconditioner* M,
                     double* x);

/// Restarted GMRES, right-preconditioned so the least-squares residual equals
/// the residual of the original system.  x is initial guess / solution.
SolveResult gmres_solve(std::size_t n, const LinearOp& A, const double* b,
                        const SolverSettings& s, const JacobiPreconditioner* M,
                        double* x);

}  // namespace dgns
