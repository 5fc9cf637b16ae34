#pragma once

namespace msa::kernels {

// Row-major GEMM variants used by the convolution kernels. When `accumulate`
// is false C is overwritten, otherwise the product is added to C.

/// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);

/// C[M,N] (+)= A[M,K] * B[N,K]^T. Parallel over the columns of C.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);

}  // namespace msa::kernels
