#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rmtlab/linalg.hpp"
#include "rmtlab/rng.hpp"

namespace testing_util {

inline rmtlab::linalg::Matrix random_matrix(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    rmtlab::CounterRng rng(seed, 0, 99);
    std::vector<double> e(n * n);
    for (auto& x : e) x = rng.uniform(lo, hi);
    return rmtlab::linalg::Matrix(n, std::move(e));
}

inline rmtlab::linalg::SymMatrix random_sym(std::size_t n, std::uint64_t seed) {
    return rmtlab::linalg::SymMatrix::from_upper(random_matrix(n, seed, -10.0, 10.0));
}

// Exact rotation by theta in the (i, j) plane.
inline rmtlab::linalg::Matrix plane_rotation(std::size_t n, std::size_t i, std::size_t j, double theta) {
    auto r = rmtlab::linalg::Matrix::identity(n);
    r(i, i) = std::cos(theta);
    r(j, j) = std::cos(theta);
    r(i, j) = -std::sin(theta);
    r(j, i) = std::sin(theta);
    return r;
}

}  // namespace testing_util
