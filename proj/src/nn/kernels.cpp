#include "phaforce/nn/kernels.hpp"

#include <atomic>
#include <vector>

#include <Eigen/Core>
#include <omp.h>

namespace phaforce::nn::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

inline void row_nn(const double* __restrict a_row, const double* __restrict B, double* __restrict c_row,
                   std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double a = a_row[p];
        if (a == 0.0) continue;
        const double* b_row = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
    }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

namespace serial {
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) row_nn(A + i * k, B, C + i * n, k, n);
}
}  // namespace serial

namespace parallel {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

// Each thread runs a blocked product over its own rows; Eigen's accumulation
// order along k does not depend on the row range, so results do not depend
// on the thread count.
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (m == 0 || n == 0 || k == 0) return;
    const ConstMap b(B, static_cast<long>(k), static_cast<long>(n));
    const int threads = omp_in_parallel() || m * k * n < 262144 ? 1 : omp_get_max_threads();
    if (threads == 1) {
        Map(C, static_cast<long>(m), static_cast<long>(n)).noalias() += ConstMap(A, static_cast<long>(m), static_cast<long>(k)) * b;
        return;
    }
#pragma omp parallel num_threads(threads)
    {
        const std::size_t t = static_cast<std::size_t>(omp_get_thread_num()), T = static_cast<std::size_t>(omp_get_num_threads());
        const std::size_t lo = m * t / T, hi = m * (t + 1) / T;
        if (hi > lo) {
            const long rows = static_cast<long>(hi - lo);
            Map(C + lo * n, rows, static_cast<long>(n)).noalias() += ConstMap(A + lo * k, rows, static_cast<long>(k)) * b;
        }
    }
}

}  // namespace parallel

void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (backend() == Backend::Serial)
        serial::gemm_nn(A, B, C, m, k, n);
    else
        parallel::gemm_nn(A, B, C, m, k, n);
}

void transpose(const double* A, double* At, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) At[j * rows + i] = A[i * cols + j];
}

void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (backend() == Backend::Parallel) {
        if (m == 0 || n == 0 || k == 0) return;
        parallel::Map(C, static_cast<long>(m), static_cast<long>(n)).noalias() +=
            parallel::ConstMap(A, static_cast<long>(m), static_cast<long>(k)) *
            parallel::ConstMap(B, static_cast<long>(n), static_cast<long>(k)).transpose();
        return;
    }
    std::vector<double> Bt(k * n);
    transpose(B, Bt.data(), n, k);
    serial::gemm_nn(A, Bt.data(), C, m, k, n);
}

void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (backend() == Backend::Parallel) {
        if (m == 0 || n == 0 || k == 0) return;
        parallel::Map(C, static_cast<long>(k), static_cast<long>(n)).noalias() +=
            parallel::ConstMap(A, static_cast<long>(m), static_cast<long>(k)).transpose() *
            parallel::ConstMap(B, static_cast<long>(m), static_cast<long>(n));
        return;
    }
    std::vector<double> At(k * m);
    transpose(A, At.data(), m, k);
    serial::gemm_nn(At.data(), B, C, k, m, n);
}

}  // namespace phaforce::nn::kernels
