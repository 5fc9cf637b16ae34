#include "msa/kernels/gemm.hpp"

#include <algorithm>
#include <cstddef>

namespace msa::kernels {

namespace {

constexpr int kTileN = 256;

// Four rows of C against one column tile of B. Keeps the four accumulator rows
// in L1 while B is streamed once per k.
template <typename T>
inline void rows4_tile(int k, int jn, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate)
{
    alignas(64) T acc0[kTileN];
    alignas(64) T acc1[kTileN];
    alignas(64) T acc2[kTileN];
    alignas(64) T acc3[kTileN];
    if (accumulate) {
        std::copy_n(c, jn, acc0);
        std::copy_n(c + ldc, jn, acc1);
        std::copy_n(c + 2 * static_cast<std::ptrdiff_t>(ldc), jn, acc2);
        std::copy_n(c + 3 * static_cast<std::ptrdiff_t>(ldc), jn, acc3);
    } else {
        std::fill_n(acc0, jn, T(0));
        std::fill_n(acc1, jn, T(0));
        std::fill_n(acc2, jn, T(0));
        std::fill_n(acc3, jn, T(0));
    }
    for (int p = 0; p < k; ++p) {
        const T a0 = a[p];
        const T a1 = a[lda + p];
        const T a2 = a[2 * static_cast<std::ptrdiff_t>(lda) + p];
        const T a3 = a[3 * static_cast<std::ptrdiff_t>(lda) + p];
        const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
#pragma omp simd
        for (int j = 0; j < jn; ++j) {
            const T bv = brow[j];
            acc0[j] += a0 * bv;
            acc1[j] += a1 * bv;
            acc2[j] += a2 * bv;
            acc3[j] += a3 * bv;
        }
    }
    std::copy_n(acc0, jn, c);
    std::copy_n(acc1, jn, c + ldc);
    std::copy_n(acc2, jn, c + 2 * static_cast<std::ptrdiff_t>(ldc));
    std::copy_n(acc3, jn, c + 3 * static_cast<std::ptrdiff_t>(ldc));
}

template <typename T>
inline void row1_tile(int k, int jn, const T* a, const T* b, int ldb, T* c, bool accumulate)
{
    alignas(64) T acc[kTileN];
    if (accumulate)
        std::copy_n(c, jn, acc);
    else
        std::fill_n(acc, jn, T(0));
    for (int p = 0; p < k; ++p) {
        const T av = a[p];
        const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
#pragma omp simd
        for (int j = 0; j < jn; ++j) acc[j] += av * brow[j];
    }
    std::copy_n(acc, jn, c);
}

}  // namespace

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate)
{
    for (int j0 = 0; j0 < n; j0 += kTileN) {
        const int jn = std::min(kTileN, n - j0);
        int i = 0;
        for (; i + 4 <= m; i += 4)
            rows4_tile(k, jn, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b + j0, ldb,
                       c + static_cast<std::ptrdiff_t>(i) * ldc + j0, ldc, accumulate);
        for (; i < m; ++i)
            row1_tile(k, jn, a + static_cast<std::ptrdiff_t>(i) * lda, b + j0, ldb,
                      c + static_cast<std::ptrdiff_t>(i) * ldc + j0, accumulate);
    }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate)
{
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        const T* brow = b + static_cast<std::ptrdiff_t>(j) * ldb;
        for (int i = 0; i < m; ++i) {
            const T* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
            T s = T(0);
#pragma omp simd reduction(+ : s)
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            T& dst = c[static_cast<std::ptrdiff_t>(i) * ldc + j];
            dst = accumulate ? dst + s : s;
        }
    }
}

template void gemm_nn<float>(int, int, int, const float*, int, const float*, int, float*, int, bool);
template void gemm_nn<double>(int, int, int, const double*, int, const double*, int, double*, int, bool);
template void gemm_nt<float>(int, int, int, const float*, int, const float*, int, float*, int, bool);
template void gemm_nt<double>(int, int, int, const double*, int, const double*, int, double*, int, bool);

}  // namespace msa::kernels
