#include "ctk/nn/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ctk::nn {

namespace {

constexpr int kBlockK = 256;

// A element (row r, depth k); TA reads A stored depth-major.
template <typename T, bool TA>
inline __attribute__((always_inline)) T a_at(const T* A, int lda, int r, int k) {
    return TA ? A[static_cast<std::ptrdiff_t>(k) * lda + r] : A[static_cast<std::ptrdiff_t>(r) * lda + k];
}

// Register tile: MR rows of A against NR contiguous columns of B.
template <typename T, bool TA, int MR, int NR>
inline __attribute__((always_inline)) void tile(int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
    T acc[MR][NR];
    for (int r = 0; r < MR; ++r)
        for (int c = 0; c < NR; ++c) acc[r][c] = C[static_cast<std::ptrdiff_t>(r) * ldc + c];
    for (int k = 0; k < K; ++k) {
        const T* b = B + static_cast<std::ptrdiff_t>(k) * ldb;
        for (int r = 0; r < MR; ++r) {
            const T a = a_at<T, TA>(A, lda, r, k);
            for (int c = 0; c < NR; ++c) acc[r][c] = std::fma(a, b[c], acc[r][c]);
        }
    }
    for (int r = 0; r < MR; ++r)
        for (int c = 0; c < NR; ++c) C[static_cast<std::ptrdiff_t>(r) * ldc + c] = acc[r][c];
}

template <typename T, bool TA, int NR>
void panel(int M, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
    constexpr int MR = 8;
    auto row = [&](int i) { return TA ? A + i : A + static_cast<std::ptrdiff_t>(i) * lda; };
    int i = 0;
    for (; i + MR <= M; i += MR)
        tile<T, TA, MR, NR>(K, row(i), lda, B, ldb, C + static_cast<std::ptrdiff_t>(i) * ldc, ldc);
    for (; i < M; ++i) tile<T, TA, 1, NR>(K, row(i), lda, B, ldb, C + static_cast<std::ptrdiff_t>(i) * ldc, ldc);
}

template <typename T, bool TA>
void gemm_impl(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
    constexpr int wide = 128 / sizeof(T);  // two 512-bit vectors
    constexpr int narrow = wide / 2;
    // Depth blocks keep the B panel cache resident; processing them in
    // ascending order preserves the per-element accumulation order.
    for (int k0 = 0; k0 < K; k0 += kBlockK) {
        const int kc = std::min(kBlockK, K - k0);
        const T* a = TA ? A + static_cast<std::ptrdiff_t>(k0) * lda : A + k0;
        const T* b = B + static_cast<std::ptrdiff_t>(k0) * ldb;
        int j = 0;
        for (; j + wide <= N; j += wide) panel<T, TA, wide>(M, kc, a, lda, b + j, ldb, C + j, ldc);
        for (; j + narrow <= N; j += narrow) panel<T, TA, narrow>(M, kc, a, lda, b + j, ldb, C + j, ldc);
        if (j == N) continue;
        for (int i = 0; i < M; ++i) {
            T* c = C + static_cast<std::ptrdiff_t>(i) * ldc;
            for (int k = 0; k < kc; ++k) {
                const T av = a_at<T, TA>(a, lda, i, k);
                const T* bk = b + static_cast<std::ptrdiff_t>(k) * ldb;
                for (int jj = j; jj < N; ++jj) c[jj] = std::fma(av, bk[jj], c[jj]);
            }
        }
    }
}

}  // namespace

template <typename T>
void gemm_acc(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
    gemm_impl<T, false>(M, N, K, A, lda, B, ldb, C, ldc);
}

template <typename T>
void gemm_tn_acc(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
    gemm_impl<T, true>(M, N, K, A, lda, B, ldb, C, ldc);
}

template <typename T>
void transpose(int rows, int cols, const T* in, T* out) {
    constexpr int B = 32;
    for (int r0 = 0; r0 < rows; r0 += B)
        for (int c0 = 0; c0 < cols; c0 += B) {
            int r1 = r0 + B < rows ? r0 + B : rows;
            int c1 = c0 + B < cols ? c0 + B : cols;
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    out[static_cast<std::ptrdiff_t>(c) * rows + r] = in[static_cast<std::ptrdiff_t>(r) * cols + c];
        }
}

#define CTK_GEMM_INSTANTIATE(T)                                                      \
    template void gemm_acc<T>(int, int, int, const T*, int, const T*, int, T*, int);    \
    template void gemm_tn_acc<T>(int, int, int, const T*, int, const T*, int, T*, int); \
    template void transpose<T>(int, int, const T*, T*);

CTK_GEMM_INSTANTIATE(float)
CTK_GEMM_INSTANTIATE(double)

}  // namespace ctk::nn
