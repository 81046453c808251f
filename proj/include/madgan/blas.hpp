#pragma once

#include <cblas-openblas.h>

namespace madgan {

// C[m,n] = A[m,k] * B[k,n] (+ C if accumulate), row-major, optional transposes
// on the logical A/B.
inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
                  const float* b, float* c, bool accumulate = false) {
  const int lda = trans_a ? m : k;
  const int ldb = trans_b ? k : n;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b, ldb,
              accumulate ? 1.0f : 0.0f, c, n);
}

inline void set_blas_threads(int n) { openblas_set_num_threads(n); }

}  // namespace madgan
