/// @file kernels.hpp
/// @brief Low-level dense kernels with runtime-dispatched SIMD variants.
///
/// Every hot inner loop of the matrix-free operators funnels through the
/// function pointers below: basis evaluation/integration are row contractions
/// against precomputed tables, and the Krylov solvers use the vector ops.
/// A scalar reference implementation always exists; on x86-64 an AVX2+FMA
/// variant is selected at startup when the CPU supports it.  The two paths
/// are equivalence-tested against each other (they may differ by floating
/// point reassociation only).

#pragma once

#include <cstddef>
#include <string>

namespace dgns::kern {

enum class Backend { scalar, avx2 };

/// Backend currently installed in the function pointers.
Backend active_backend();
/// Human-readable name of the active backend ("scalar" / "avx2").
std::string backend_name();
/// True if this process may select the AVX2 path.
bool avx2_supported();
/// Install a backend; throws std::runtime_error if unsupported on this CPU.
void set_backend(Backend b);

// ---------------------------------------------------------------------------
// Vector kernels (Krylov solvers, field updates)
// ---------------------------------------------------------------------------
/// y += a*x
extern void (*axpy)(std::size_t n, double a, const double* x, double* y);
/// y = a*x + b*y
extern void (*axpby)(std::size_t n, double a, const double* x, double b, double* y);
/// x *= a
extern void (*scal)(std::size_t n, double a, double* x);
/// sum_i x_i * y_i
extern double (*dot)(std::size_t n, const double* x, const double* y);
/// max_i |x_i - y_i|
extern double (*max_abs_diff)(std::size_t n, const double* x, const double* y);

// ---------------------------------------------------------------------------
// Table contractions (basis evaluation / integration)
//
// Tables are row-major [nb][nq]: row i holds basis function i sampled at all
// nq quadrature points.
// ---------------------------------------------------------------------------
/// out[q] = sum_i c[i] * T[i*nq + q]   (overwrites out) — "evaluate at points"
extern void (*contract_rows)(int nb, int nq, const double* T, const double* c, double* out);
/// out[i] += sum_q T[i*nq + q] * f[q]  (accumulates)    — "integrate against basis"
extern void (*project_rows)(int nb, int nq, const double* T, const double* f, double* out);

} // namespace dgns::kern
