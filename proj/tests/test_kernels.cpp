#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "gram/kernels.hpp"

using namespace gram;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Plain triple-loop oracles, deliberately independent of the library code.
void naive_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
}

void naive_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[j * k + p];
}

void naive_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[p * m + i] * b[p * n + j];
}

bool close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    if (std::abs(a[i] - b[i]) > tol * scale) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scalar backend matches the naive matmul oracles") {
  const auto& bk = kernels::scalar_backend();
  // odd sizes on purpose so SIMD tails get exercised via the same cases later
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1},
                         {3, 5, 7},
                         {8, 8, 8},
                         {13, 17, 9},
                         {32, 64, 32}}) {
    auto a = randn(m * k, 1000 + m);
    auto bnn = randn(k * n, 2000 + n);
    auto bnt = randn(n * k, 3000 + n);
    auto atn = randn(k * m, 4000 + m);

    std::vector<double> got(m * n, 0.5), want(m * n, 0.5);
    bk.matmul_nn(a.data(), bnn.data(), got.data(), m, k, n);
    naive_nn(a.data(), bnn.data(), want.data(), m, k, n);
    CHECK(close(got, want, 1e-12));

    got.assign(m * n, -0.25);
    want.assign(m * n, -0.25);
    bk.matmul_nt(a.data(), bnt.data(), got.data(), m, k, n);
    naive_nt(a.data(), bnt.data(), want.data(), m, k, n);
    CHECK(close(got, want, 1e-12));

    got.assign(m * n, 0.0);
    want.assign(m * n, 0.0);
    bk.matmul_tn(atn.data(), bnn.data(), got.data(), m, k, n);
    naive_tn(atn.data(), bnn.data(), want.data(), m, k, n);
    CHECK(close(got, want, 1e-12));
  }
}

TEST_CASE("scalar vector kernels match direct loops") {
  const auto& bk = kernels::scalar_backend();
  for (std::size_t n : {1u, 2u, 7u, 64u, 129u}) {
    auto x = randn(n, n);
    auto y = randn(n, n + 1);

    double want_dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) want_dot += x[i] * y[i];
    CHECK(bk.dot(x.data(), y.data(), n) == doctest::Approx(want_dot).epsilon(1e-12));

    auto y2 = y;
    bk.axpy(0.75, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i] + 0.75 * x[i]));

    auto x2 = x;
    bk.scale(-2.0, x2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(x2[i] == doctest::Approx(-2.0 * x[i]));

    std::vector<double> out(n);
    bk.add(x.data(), y.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(x[i] + y[i]));
  }
}

TEST_CASE("simd backend agrees with scalar on every kernel") {
  if (!kernels::set_active_backend("avx2")) {
    MESSAGE("avx2 backend unavailable on this host, equivalence skipped");
    return;
  }
  const auto& simd = kernels::active_backend();
  const auto& ref = kernels::scalar_backend();
  CHECK(std::string(simd.name) == "avx2");

  for (std::size_t n : {1u, 3u, 4u, 5u, 8u, 31u, 257u}) {
    auto x = randn(n, 50 + n);
    auto y = randn(n, 60 + n);
    CHECK(simd.dot(x.data(), y.data(), n) ==
          doctest::Approx(ref.dot(x.data(), y.data(), n)).epsilon(1e-12));

    auto ys = y, yr = y;
    simd.axpy(1.25, x.data(), ys.data(), n);
    ref.axpy(1.25, x.data(), yr.data(), n);
    CHECK(close(ys, yr, 1e-13));

    auto xs = x, xr = x;
    simd.scale(0.3, xs.data(), n);
    ref.scale(0.3, xr.data(), n);
    CHECK(close(xs, xr, 1e-13));

    std::vector<double> os(n), orf(n);
    simd.add(x.data(), y.data(), os.data(), n);
    ref.add(x.data(), y.data(), orf.data(), n);
    CHECK(close(os, orf, 1e-13));
  }

  for (auto [m, k, n] : {std::array<std::size_t, 3>{2, 3, 5}, {7, 11, 13}, {16, 16, 16},
                         {24, 33, 17}}) {
    auto a = randn(m * k, 70 + m);
    auto b = randn(k * n, 80 + n);
    auto bt = randn(n * k, 90 + n);
    auto at = randn(k * m, 95 + m);
    for (int which = 0; which < 3; ++which) {
      std::vector<double> cs(m * n, 1.0), cr(m * n, 1.0);
      if (which == 0) {
        simd.matmul_nn(a.data(), b.data(), cs.data(), m, k, n);
        ref.matmul_nn(a.data(), b.data(), cr.data(), m, k, n);
      } else if (which == 1) {
        simd.matmul_nt(a.data(), bt.data(), cs.data(), m, k, n);
        ref.matmul_nt(a.data(), bt.data(), cr.data(), m, k, n);
      } else {
        simd.matmul_tn(at.data(), b.data(), cs.data(), m, k, n);
        ref.matmul_tn(at.data(), b.data(), cr.data(), m, k, n);
      }
      CHECK(close(cs, cr, 1e-12));
    }
  }
  kernels::set_active_backend(simd.name);
}

TEST_CASE("backend selection is explicit and reversible") {
  const std::string before = kernels::active_backend().name;
  CHECK(kernels::set_active_backend("scalar"));
  CHECK(std::string(kernels::active_backend().name) == "scalar");
  CHECK_FALSE(kernels::set_active_backend("no-such-backend"));
  CHECK(std::string(kernels::active_backend().name) == "scalar");
  kernels::set_active_backend(before);
}
