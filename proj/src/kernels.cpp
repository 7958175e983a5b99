/// @file kernels.cpp
/// @brief Scalar reference kernels and the runtime dispatch machinery.

#include "kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace dgns::kern {

// ---------------------------------------------------------------------------
// Scalar reference implementations
// ---------------------------------------------------------------------------
namespace scalar_impl {

static void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

static void axpby(std::size_t n, double a, const double* x, double b, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

static void scal(std::size_t n, double a, double* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

static double dot(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

static double max_abs_diff(std::size_t n, const double* x, const double* y) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

static void contract_rows(int nb, int nq, const double* T, const double* c, double* out) {
  for (int q = 0; q < nq; ++q) out[q] = 0.0;
  for (int i = 0; i < nb; ++i) {
    const double ci = c[i];
    const double* row = T + static_cast<std::size_t>(i) * nq;
    for (int q = 0; q < nq; ++q) out[q] += ci * row[q];
  }
}

static void project_rows(int nb, int nq, const double* T, const double* f, double* out) {
  for (int i = 0; i < nb; ++i) {
    const double* row = T + static_cast<std::size_t>(i) * nq;
    double s = 0.0;
    for (int q = 0; q < nq; ++q) s += row[q] * f[q];
    out[i] += s;
  }
}

} // namespace scalar_impl

// AVX2 implementations live in kernels_avx2.cpp (compiled with -mavx2 -mfma).
#ifdef DGNS_HAVE_AVX2
namespace avx2_impl {
void axpy(std::size_t, double, const double*, double*);
void axpby(std::size_t, double, const double*, double, double*);
void scal(std::size_t, double, double*);
double dot(std::size_t, const double*, const double*);
double max_abs_diff(std::size_t, const double*, const double*);
void contract_rows(int, int, const double*, const double*, double*);
void project_rows(int, int, const double*, const double*, double*);
} // namespace avx2_impl
#endif

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------
void (*axpy)(std::size_t, double, const double*, double*) = scalar_impl::axpy;
void (*axpby)(std::size_t, double, const double*, double, double*) = scalar_impl::axpby;
void (*scal)(std::size_t, double, double*) = scalar_impl::scal;
double (*dot)(std::size_t, const double*, const double*) = scalar_impl::dot;
double (*max_abs_diff)(std::size_t, const double*, const double*) = scalar_impl::max_abs_diff;
void (*contract_rows)(int, int, const double*, const double*, double*) = scalar_impl::contract_rows;
void (*project_rows)(int, int, const double*, const double*, double*) = scalar_impl::project_rows;

static Backend g_backend = Backend::scalar;

bool avx2_supported() {
#if defined(DGNS_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void set_backend(Backend b) {
  if (b == Backend::avx2) {
#ifdef DGNS_HAVE_AVX2
    if (!avx2_supported()) throw std::runtime_error("AVX2 backend requested but CPU lacks AVX2/FMA");
    axpy = avx2_impl::axpy;
    axpby = avx2_impl::axpby;
    scal = avx2_impl::scal;
    dot = avx2_impl::dot;
    max_abs_diff = avx2_impl::max_abs_diff;
    contract_rows = avx2_impl::contract_rows;
    project_rows = avx2_impl::project_rows;
    g_backend = Backend::avx2;
    return;
#else
    throw std::runtime_error("AVX2 backend not compiled in");
#endif
  }
  axpy = scalar_impl::axpy;
  axpby = scalar_impl::axpby;
  scal = scalar_impl::scal;
  dot = scalar_impl::dot;
  max_abs_diff = scalar_impl::max_abs_diff;
  contract_rows = scalar_impl::contract_rows;
  project_rows = scalar_impl::project_rows;
  g_backend = Backend::scalar;
}

Backend active_backend() { return g_backend; }

std::string backend_name() { return g_backend == Backend::avx2 ? "avx2" : "scalar"; }

// Pick the best backend at startup; the DGNS_SIMD environment variable
// ("scalar" or "avx2") overrides the automatic choice.
namespace {
struct BackendInit {
  BackendInit() {
    const char* env = std::getenv("DGNS_SIMD");
    if (env != nullptr) {
      std::string s(env);
      if (s == "scalar") { set_backend(Backend::scalar); return; }
      if (s == "avx2") { set_backend(Backend::avx2); return; }
    }
    if (avx2_supported()) set_backend(Backend::avx2);
  }
};
static BackendInit g_backend_init;
} // namespace

} // namespace dgns::kern
