#include "rmtlab/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <vector>

#include <omp.h>

namespace rmtlab::kernels {

namespace {

std::atomic<int> g_threads{1};

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

int team(std::size_t work) {
    const int t = g_threads.load(std::memory_order_relaxed);
    return work < kParallelWork ? 1 : t;
}

}  // namespace

void set_threads(int threads) { g_threads.store(std::max(threads, 1)); }
int threads() { return g_threads.load(); }

namespace {

constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 32;

// C[i0:i0+MR, j0:j0+NR] over the full k range, accumulators held in registers.
template <std::size_t MR, std::size_t NR>
inline void block_full(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                       bool accumulate) {
    double acc[MR][NR];
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t j = 0; j < NR; ++j) acc[r][j] = accumulate ? c[r * n + j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double* __restrict brow = b + p * n;
        for (std::size_t r = 0; r < MR; ++r) {
            const double av = a[r * k + p];
            for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t j = 0; j < NR; ++j) c[r * n + j] = acc[r][j];
}

inline void block_edge(std::size_t mr, std::size_t nr, std::size_t n, std::size_t k, const double* a,
                       const double* b, double* c, bool accumulate) {
    for (std::size_t r = 0; r < mr; ++r) {
        double* __restrict crow = c + r * n;
        if (!accumulate) std::fill(crow, crow + nr, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[r * k + p];
            const double* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < nr; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    const auto blocks = static_cast<std::int64_t>((m + kMR - 1) / kMR);
#pragma omp parallel for num_threads(team(m * n * k)) schedule(static)
    for (std::int64_t bb = 0; bb < blocks; ++bb) {
        const std::size_t i0 = static_cast<std::size_t>(bb) * kMR;
        const std::size_t mr = std::min(kMR, m - i0);
        for (std::size_t j0 = 0; j0 < n; j0 += kNR) {
            const std::size_t nr = std::min(kNR, n - j0);
            if (mr == kMR && nr == kNR)
                block_full<kMR, kNR>(n, k, a + i0 * k, b + j0, c + i0 * n + j0, accumulate);
            else
                block_edge(mr, nr, n, k, a + i0 * k, b + j0, c + i0 * n + j0, accumulate);
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    // Transpose B once so the inner loop streams contiguous memory.
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    gemm_nn(k, n, m, at.data(), b, c, accumulate);
}

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] = s;
        }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[p * n + j] : 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * b[i * n + j];
            c[p * n + j] = s;
        }
}

}  // namespace serial

}  // namespace rmtlab::kernels
