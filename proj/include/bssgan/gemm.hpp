#pragma once

#include <cstddef>

#if defined(BSSGAN_WITH_CBLAS)
#include <cblas.h>
#endif

namespace bssgan {

// Row-major C(MxN) = alpha * op(A) * op(B) + beta * C.
// op(A) is A (MxK) or A^T with A stored (KxM) when trans_a is set.

#if defined(BSSGAN_WITH_CBLAS)

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb, double beta,
                 double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

// Reductions must be order-fixed for reproducibility; pin the backend to one
// worker.
inline void gemm_force_single_thread() { openblas_set_num_threads(1); }

#else

template <class T>
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
                 const T* a, int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  auto at = [&](int i, int j) { return trans_a ? a[j * lda + i] : a[i * lda + j]; };
  auto bt = [&](int i, int j) { return trans_b ? b[j * ldb + i] : b[i * ldb + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
    }
  }
}

inline void gemm_force_single_thread() {}

#endif

}  // namespace bssgan
