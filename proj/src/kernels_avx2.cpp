/// @file kernels_avx2.cpp
/// @brief AVX2+FMA variants of the dense kernels (translation unit compiled
///        with -mavx2 -mfma; only ever called after a runtime CPU check).

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace dgns::kern::avx2_impl {

void axpy(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(std::size_t n, double a, const double* x, double b, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void scal(std::size_t n, double a, double* x) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

static inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double max_abs_diff(std::size_t n, const double* x, const double* y) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign_mask, d));
  }
  double m2[4];
  _mm256_storeu_pd(m2, acc);
  double m = std::max(std::max(m2[0], m2[1]), std::max(m2[2], m2[3]));
  for (; i < n; ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

void contract_rows(int nb, int nq, const double* T, const double* c, double* out) {
  for (int q = 0; q < nq; ++q) out[q] = 0.0;
  for (int i = 0; i < nb; ++i) {
    const __m256d ci = _mm256_set1_pd(c[i]);
    const double* row = T + static_cast<std::size_t>(i) * nq;
    int q = 0;
    for (; q + 4 <= nq; q += 4) {
      __m256d vo = _mm256_loadu_pd(out + q);
      vo = _mm256_fmadd_pd(ci, _mm256_loadu_pd(row + q), vo);
      _mm256_storeu_pd(out + q, vo);
    }
    for (; q < nq; ++q) out[q] += c[i] * row[q];
  }
}

void project_rows(int nb, int nq, const double* T, const double* f, double* out) {
  for (int i = 0; i < nb; ++i) {
    const double* row = T + static_cast<std::size_t>(i) * nq;
    __m256d acc = _mm256_setzero_pd();
    int q = 0;
    for (; q + 4 <= nq; q += 4)
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + q), _mm256_loadu_pd(f + q), acc);
    double s = hsum(acc);
    for (; q < nq; ++q) s += row[q] * f[q];
    out[i] += s;
  }
}

} // namespace dgns::kern::avx2_impl
