#pragma once

// Row-major dense kernels for the transformer. The default versions split
// output rows across OpenMP threads; every output element is still summed in
// one fixed order, so results do not depend on the thread count. The
// `serial` namespace holds plain triple-loop references for tests and the
// benchmark.

#include <cstddef>
#include <span>

namespace rmtlab::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

// Number of threads the kernels use; 1 selects single-threaded execution.
void set_threads(int threads);
int threads();

namespace serial {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
}  // namespace serial

}  // namespace rmtlab::kernels
