#pragma once

namespace ctk::nn {

/// C[MxN] += A[MxK] * B[KxN], all row-major with leading dimensions.
/// Each C element is updated by fused multiply-add in ascending k, so the
/// result is bit-identical to a naive triple loop using std::fma.
template <typename T>
void gemm_acc(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc);

/// C[MxN] += A^T * B where A is stored K x M (row-major, leading dim lda).
/// Same accumulation order as gemm_acc.
template <typename T>
void gemm_tn_acc(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc);

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(int rows, int cols, const T* in, T* out);

}  // namespace ctk::nn
