#include "gram/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define GRAM_X86 1
#include <immintrin.h>
#else
#define GRAM_X86 0
#endif

namespace gram::kernels {
namespace {

// ---------------------------------------------------------------- scalar

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <double DOT(const double*, const double*, std::size_t),
          void AXPY(double, const double*, double*, std::size_t)>
struct MatmulImpl {
  static void nn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        AXPY(arow[p], b + p * n, crow, n);
      }
    }
  }
  static void nt(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += DOT(arow, b + j * k, k);
      }
    }
  }
  static void tn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    // A is k x m, walk it row-wise to stay cache friendly.
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        AXPY(arow[i], brow, c + i * n, n);
      }
    }
  }
};

using ScalarMatmul = MatmulImpl<dot_scalar, axpy_scalar>;

const Backend kScalar{dot_scalar, axpy_scalar, scale_scalar, add_scalar,
                      ScalarMatmul::nn, ScalarMatmul::nt, ScalarMatmul::tn,
                      "scalar"};

// ----------------------------------------------------------------- avx2

#if GRAM_X86

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  double lanes[4];
  _mm256_storeu_pd(lanes, acc0);
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= a;
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

using Avx2Matmul = MatmulImpl<dot_avx2, axpy_avx2>;

const Backend kAvx2{dot_avx2, axpy_avx2, scale_avx2, add_avx2,
                    Avx2Matmul::nn, Avx2Matmul::nt, Avx2Matmul::tn, "avx2"};

bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

#endif  // GRAM_X86

const Backend* pick_default() {
  const char* env = std::getenv("GRAM_KERNELS");
#if GRAM_X86
  if (env && std::strcmp(env, "scalar") == 0) return &kScalar;
  if (avx2_supported()) return &kAvx2;
#else
  (void)env;
#endif
  return &kScalar;
}

const Backend* g_active = pick_default();

}  // namespace

const Backend& scalar_backend() { return kScalar; }
const Backend& active_backend() { return *g_active; }

bool set_active_backend(std::string_view name) {
  if (name == "scalar") {
    g_active = &kScalar;
    return true;
  }
#if GRAM_X86
  if (name == "avx2" && avx2_supported()) {
    g_active = &kAvx2;
    return true;
  }
#endif
  return false;
}

}  // namespace gram::kernels
