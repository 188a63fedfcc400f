// Serial reference vs OpenMP kernels. Usage: rmtlab_bench [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include <omp.h>

#include "rmtlab/datagen.hpp"
#include "rmtlab/ensembles.hpp"
#include "rmtlab/kernels.hpp"

using namespace rmtlab;

namespace {

double seconds(const std::function<void()>& f, int reps) {
    f();
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void row(const char* name, double serial, double parallel) {
    std::printf("%-28s %12.3f ms %12.3f ms %8.2fx\n", name, serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
    std::printf("threads: %d\n%-28s %15s %15s %9s\n", threads, "kernel", "serial", "openmp", "speedup");

    for (std::size_t n : {64, 256, 512}) {
        std::vector<double> a(n * n), b(n * n), c(n * n);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = static_cast<double>(i % 17) / 17.0;
            b[i] = static_cast<double>(i % 13) / 13.0;
        }
        const int reps = n > 256 ? 3 : 20;
        kernels::set_threads(threads);
        const double s = seconds([&] { kernels::serial::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false); }, reps);
        const double p = seconds([&] { kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false); }, reps);
        char name[64];
        std::snprintf(name, sizeof name, "gemm_nn %zu^3", n);
        row(name, s, p);
    }

    ensembles::EnsembleConfig cfg{ensembles::Kind::semicircle, 5, ensembles::kDefaultSigma, 1, std::nullopt};
    row("condition_numbers n=5 10k", seconds([&] { ensembles::serial::condition_numbers(cfg, 10000); }, 3),
        seconds([&] { ensembles::condition_numbers(cfg, 10000, threads); }, 3));

    cfg.kind = ensembles::Kind::gaussian;
    cfg.n = 8;
    row("positive_fraction n=8 100k", seconds([&] { ensembles::serial::positive_fraction(cfg, 100000); }, 1),
        seconds([&] { ensembles::positive_fraction(cfg, 100000, threads); }, 1));

    datagen::DatasetSpec spec;
    spec.ensemble.n = 5;
    spec.ensemble.seed = 1;
    spec.task = codec::Task::diagonalization;
    row("format_records n=5 20k", seconds([&] { datagen::format_records(spec, 0, 20000, 1); }, 1),
        seconds([&] { datagen::format_records(spec, 0, 20000, threads); }, 1));
    return 0;
}
