#pragma once

#include <cstdint>

// Dense numeric kernels. The default entry points parallelize over
// independent output rows with OpenMP; dcdm::kernels::serial holds
// plain-loop reference versions used by tests and the benchmark.
//
// Every kernel computes each output element with a fixed, scheduling-
// independent accumulation order, so the parallel and serial variants
// produce bitwise-identical results for identical inputs.

namespace dcdm::kernels {

// c[m x n] = a[m x p] * b[p x n]; accumulates into c when acc is true.
void matmul_nn(const double* a, const double* b, double* c, int m, int p, int n, bool acc);

// c[m x n] = a[m x p] * b[n x p]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int p, int n, bool acc);

// c[m x n] = a[p x m]^T * b[p x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int p, int n, bool acc);

// Row-wise softmax with an optional boolean mask (1 = position allowed).
// Masked entries produce exact zeros; a fully masked row yields an
// all-zero row. Stabilized by subtracting the row max over allowed entries.
void softmax_rows_masked(const double* x, const std::uint8_t* allow, double* y, int rows, int cols);

// Accumulates d(loss)/dx into gx given y = softmax_rows_masked(x) and gy.
void softmax_rows_masked_backward(const double* y, const double* gy, const std::uint8_t* allow,
                                  double* gx, int rows, int cols);

namespace serial {
void matmul_nn(const double* a, const double* b, double* c, int m, int p, int n, bool acc);
void matmul_nt(const double* a, const double* b, double* c, int m, int p, int n, bool acc);
void matmul_tn(const double* a, const double* b, double* c, int m, int p, int n, bool acc);
void softmax_rows_masked(const double* x, const std::uint8_t* allow, double* y, int rows, int cols);
void softmax_rows_masked_backward(const double* y, const double* gy, const std::uint8_t* allow,
                                  double* gx, int rows, int cols);
}  // namespace serial

}  // namespace dcdm::kernels
