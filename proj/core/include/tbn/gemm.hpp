#pragma once

#include <cstdint>

namespace tbn {

// C = alpha * op(A) * op(B) + beta * C, row-major, single thread.
// op(A) is MxK, op(B) is KxN, C is MxN with leading dimensions lda/ldb/ldc.
// Backed by OpenBLAS when it can be loaded at runtime, otherwise by a
// blocked reference loop. Both produce identical results only up to fp
// rounding; tests that need exact dual-route agreement compare against the
// naive convolution loops, not against this wrapper.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
          float beta, float* c, int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b,
          int64_t ldb, double beta, double* c, int64_t ldc);

// True when the runtime BLAS was loaded (vs the built-in fallback).
bool gemm_backend_is_blas();

}  // namespace tbn
