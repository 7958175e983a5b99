/// @file test_kernels.cpp
/// @brief Dense kernel correctness and scalar/SIMD backend equivalence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kernels.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace dgns;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = uni(rng);
  return v;
}

} // namespace

// =============================================================================
// Scalar reference correctness (exact against naive loops)
// =============================================================================

TEST_CASE("scalar kernels match naive loops exactly") {
  kern::set_backend(kern::Backend::scalar);
  const std::size_t n = 257;  // odd size: exercises any remainder handling
  auto x = random_vec(n, 1);
  auto y = random_vec(n, 2);

  SUBCASE("axpy") {
    auto y2 = y;
    kern::axpy(n, 0.37, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == y[i] + 0.37 * x[i]);
  }
  SUBCASE("axpby") {
    auto y2 = y;
    kern::axpby(n, 0.37, x.data(), -1.25, y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == 0.37 * x[i] + (-1.25) * y[i]);
  }
  SUBCASE("scal") {
    auto x2 = x;
    kern::scal(n, -3.5, x2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(x2[i] == -3.5 * x[i]);
  }
  SUBCASE("dot") {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    CHECK(kern::dot(n, x.data(), y.data()) == doctest::Approx(s).epsilon(1e-15));
  }
  SUBCASE("max_abs_diff") {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i] - y[i]));
    CHECK(kern::max_abs_diff(n, x.data(), y.data()) == m);
  }
  SUBCASE("contract_rows / project_rows") {
    const int nb = 27, nq = 25;
    auto T = random_vec(static_cast<std::size_t>(nb) * nq, 3);
    auto c = random_vec(nb, 4);
    auto f = random_vec(nq, 5);

    std::vector<double> out(nq, 0.0);
    kern::contract_rows(nb, nq, T.data(), c.data(), out.data());
    for (int q = 0; q < nq; ++q) {
      double s = 0.0;
      for (int i = 0; i < nb; ++i) s += c[i] * T[static_cast<std::size_t>(i) * nq + q];
      CHECK(out[q] == doctest::Approx(s).epsilon(1e-14));
    }

    std::vector<double> acc(nb, 7.0);  // must accumulate, not overwrite
    kern::project_rows(nb, nq, T.data(), f.data(), acc.data());
    for (int i = 0; i < nb; ++i) {
      double s = 7.0;
      for (int q = 0; q < nq; ++q) s += T[static_cast<std::size_t>(i) * nq + q] * f[q];
      CHECK(acc[i] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

// =============================================================================
// Backend equivalence: the SIMD path may differ from scalar only by floating
// point reassociation.
// =============================================================================

TEST_CASE("simd backend agrees with scalar") {
  if (!kern::avx2_supported()) {
    MESSAGE("AVX2 not available on this CPU; equivalence test skipped");
    return;
  }

  for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(64), std::size_t(1001)}) {
    auto x = random_vec(n, 10 + static_cast<unsigned>(n));
    auto y = random_vec(n, 20 + static_cast<unsigned>(n));

    kern::set_backend(kern::Backend::scalar);
    auto ys = y;
    kern::axpy(n, 1.7, x.data(), ys.data());
    kern::axpby(n, -0.3, x.data(), 2.0, ys.data());
    kern::scal(n, 0.99, ys.data());
    const double dots = kern::dot(n, x.data(), ys.data());
    const double mads = kern::max_abs_diff(n, x.data(), ys.data());

    kern::set_backend(kern::Backend::avx2);
    auto yv = y;
    kern::axpy(n, 1.7, x.data(), yv.data());
    kern::axpby(n, -0.3, x.data(), 2.0, yv.data());
    kern::scal(n, 0.99, yv.data());
    const double dotv = kern::dot(n, x.data(), yv.data());
    const double madv = kern::max_abs_diff(n, x.data(), yv.data());

    for (std::size_t i = 0; i < n; ++i) CHECK(ys[i] == yv[i]);  // elementwise ops: identical
    CHECK(dotv == doctest::Approx(dots).epsilon(1e-13));
    CHECK(madv == doctest::Approx(mads).epsilon(1e-13));
  }

  // Table contractions at the sizes the solver actually uses (Q2/Q3 in 2D/3D).
  for (int nb : {9, 16, 27, 64}) {
    for (int nq : {16, 25, 64, 125}) {
      auto T = random_vec(static_cast<std::size_t>(nb) * nq, 30 + nb + nq);
      auto c = random_vec(nb, 40 + nb);
      auto f = random_vec(nq, 50 + nq);

      kern::set_backend(kern::Backend::scalar);
      std::vector<double> ev_s(nq, 0.0), pr_s(nb, 0.0);
      kern::contract_rows(nb, nq, T.data(), c.data(), ev_s.data());
      kern::project_rows(nb, nq, T.data(), f.data(), pr_s.data());

      kern::set_backend(kern::Backend::avx2);
      std::vector<double> ev_v(nq, 0.0), pr_v(nb, 0.0);
      kern::contract_rows(nb, nq, T.data(), c.data(), ev_v.data());
      kern::project_rows(nb, nq, T.data(), f.data(), pr_v.data());

      for (int q = 0; q < nq; ++q) CHECK(ev_v[q] == doctest::Approx(ev_s[q]).epsilon(1e-13));
      for (int i = 0; i < nb; ++i) CHECK(pr_v[i] == doctest::Approx(pr_s[i]).epsilon(1e-13));
    }
  }

  kern::set_backend(kern::Backend::scalar);
}

TEST_CASE("backend dispatch bookkeeping") {
  kern::set_backend(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  CHECK(kern::backend_name() == "scalar");
  if (kern::avx2_supported()) {
    kern::set_backend(kern::Backend::avx2);
    CHECK(kern::backend_name() == "avx2");
    kern::set_backend(kern::Backend::scalar);
  }
}
