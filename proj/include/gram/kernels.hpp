#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels used by the tensor layer. Every kernel has
// a scalar reference implementation and, on x86-64 with AVX2+FMA, a SIMD
// variant. The active backend is chosen once at startup from cpuid and can
// be forced with the GRAM_KERNELS environment variable ("scalar" or "avx2").
namespace gram::kernels {

struct Backend {
  // y dot x over n elements.
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x[i] *= a
  void (*scale)(double a, double* x, std::size_t n);
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n], row-major.
  void (*matmul_nn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A[m x k] * B[n x k]^T, row-major.
  void (*matmul_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A[k x m]^T * B[k x n], row-major.
  void (*matmul_tn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
  const char* name;
};

const Backend& scalar_backend();
// Backend selected at startup (cpuid + GRAM_KERNELS override).
const Backend& active_backend();
// For tests: force a backend by name; returns false if unavailable.
bool set_active_backend(std::string_view name);

inline double dot(const double* x, const double* y, std::size_t n) {
  return active_backend().dot(x, y, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active_backend().axpy(a, x, y, n);
}
inline void scale(double a, double* x, std::size_t n) {
  active_backend().scale(a, x, n);
}
inline void add(const double* a, const double* b, double* out, std::size_t n) {
  active_backend().add(a, b, out, n);
}
inline void matmul_nn(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  active_backend().matmul_nn(a, b, c, m, k, n);
}
inline void matmul_nt(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  active_backend().matmul_nt(a, b, c, m, k, n);
}
inline void matmul_tn(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  active_backend().matmul_tn(a, b, c, m, k, n);
}

}  // namespace gram::kernels
