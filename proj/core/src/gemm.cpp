#include "tbn/gemm.hpp"

#include <dlfcn.h>
#include <stdlib.h>

#include <mutex>
#include <vector>

namespace tbn {
namespace {

enum CblasOrder { kRowMajor = 101 };
enum CblasTranspose { kNoTrans = 111, kTrans = 112 };

using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*,
                         int, const float*, int, float, float*, int);
using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*,
                         int, const double*, int, double, double*, int);

struct Backend {
  SgemmFn sgemm = nullptr;
  DgemmFn dgemm = nullptr;
};

// OpenBLAS 0.3.x misdetects recent Xeons and falls back to Prescott-era SSE
// kernels. The core type can only be chosen via the environment before the
// library constructor runs, hence setenv + dlopen instead of linking.
Backend load_backend() {
  Backend b;
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx512f")) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  } else if (__builtin_cpu_supports("avx2")) {
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
  }
#endif
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  const char* names[] = {"libopenblas.so.0", "libopenblas.so",
                         "libcblas.so.3", "libblas.so.3"};
  for (const char* name : names) {
    void* h = dlopen(name, RTLD_NOW | RTLD_LOCAL);
    if (!h) continue;
    auto* s = reinterpret_cast<SgemmFn>(dlsym(h, "cblas_sgemm"));
    auto* d = reinterpret_cast<DgemmFn>(dlsym(h, "cblas_dgemm"));
    if (s && d) {
      b.sgemm = s;
      b.dgemm = d;
      return b;
    }
    dlclose(h);
  }
  return b;
}

const Backend& backend() {
  static Backend b = load_backend();
  return b;
}

// Cache-blocked fallback. Correct for all trans/ld combinations; only used
// when no BLAS library is present.
template <typename T>
void gemm_fallback(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                   T alpha, const T* a, int64_t lda, const T* b, int64_t ldb,
                   T beta, T* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
  }
  constexpr int64_t kBlock = 64;
  for (int64_t kk = 0; kk < k; kk += kBlock) {
    int64_t kend = kk + kBlock < k ? kk + kBlock : k;
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      for (int64_t p = kk; p < kend; ++p) {
        T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        if (av == T(0)) continue;
        av *= alpha;
        if (!trans_b) {
          const T* brow = b + p * ldb;
          for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        } else {
          for (int64_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
        }
      }
    }
  }
}

}  // namespace

bool gemm_backend_is_blas() { return backend().sgemm != nullptr; }

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
          float beta, float* c, int64_t ldc) {
  if (m <= 0 || n <= 0) return;
  const Backend& be = backend();
  if (be.sgemm) {
    be.sgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
             trans_b ? kTrans : kNoTrans, static_cast<int>(m),
             static_cast<int>(n), static_cast<int>(k), alpha, a,
             static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
             static_cast<int>(ldc));
    return;
  }
  gemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b,
          int64_t ldb, double beta, double* c, int64_t ldc) {
  if (m <= 0 || n <= 0) return;
  const Backend& be = backend();
  if (be.dgemm) {
    be.dgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
             trans_b ? kTrans : kNoTrans, static_cast<int>(m),
             static_cast<int>(n), static_cast<int>(k), alpha, a,
             static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
             static_cast<int>(ldc));
    return;
  }
  gemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace tbn
