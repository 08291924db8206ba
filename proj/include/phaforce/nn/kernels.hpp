#pragma once

#include <cstddef>

// Dense row-major f64 GEMM kernels. The serial backend is a plain loop kept as
// the reference; the parallel backend splits rows across OpenMP threads and
// runs a blocked (Eigen) product per block. The two agree to rounding, and the
// parallel result does not depend on the thread count.
namespace phaforce::nn::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend b);
Backend backend();

namespace serial {
// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
}  // namespace serial

namespace parallel {
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
}  // namespace parallel

// Dispatch on the active backend.
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);

void transpose(const double* A, double* At, std::size_t rows, std::size_t cols);

}  // namespace phaforce::nn::kernels
