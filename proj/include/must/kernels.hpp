#pragma once

// Dense row-major kernels behind the tensor ops.
//
// Every kernel has an OpenMP version (used by the library) and a plain serial
// version in `kernels::serial` kept as the reference for tests and benchmarks.
// Both variants perform the same floating-point operations in the same order
// for every output element, so their results are bit-identical regardless of
// the thread count.

#include <cstddef>
#include <span>

namespace must::kernels {

// C[m×n] = A[m×k] · B[k×n]   (C += ... when accumulate)
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// C[m×n] = A[m×k] · B[n×k]ᵀ
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// C[m×n] = A[k×m]ᵀ · B[k×n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// Row-wise softmax with per-row max subtraction.
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols);

// Row-wise layer normalization. `mean` and `rstd` receive per-row statistics
// (length `rows`) for the backward pass.
void layer_norm_rows(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta, std::span<double> y, std::span<double> mean,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols);
void layer_norm_rows(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta, std::span<double> y, std::span<double> mean,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps);

}  // namespace serial

// Number of threads the OpenMP kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace must::kernels
