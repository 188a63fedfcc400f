#include "rmtlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rmtlab/error.hpp"

namespace rmtlab::linalg {

namespace {

void require_finite(std::span<const double> xs) {
    for (double x : xs) {
        if (!std::isfinite(x)) throw PreconditionError("matrix entry is not finite");
    }
}

void require_same_n(const Matrix& a, const Matrix& b) {
    if (a.n() != b.n()) {
        throw PreconditionError("matrix size mismatch: " + std::to_string(a.n()) + " vs " +
                                std::to_string(b.n()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

Matrix::Matrix(std::size_t n, std::vector<double> entries) : n_(n), data_(std::move(entries)) {
    if (data_.size() != n * n) throw PreconditionError("matrix needs n*n entries");
    require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    require_finite(m.entries());
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Matrix::is_symmetric() const noexcept {
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j)
            if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    require_same_n(a, b);
    const std::size_t n = a.n();
    Matrix c(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& x : c.entries()) x *= s;
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_n(a, b);
    Matrix c = a;
    auto ce = c.entries();
    auto be = b.entries();
    for (std::size_t i = 0; i < ce.size(); ++i) ce[i] -= be[i];
    return c;
}

SymMatrix SymMatrix::from_upper(const Matrix& m) {
    Matrix s = m;
    for (std::size_t i = 0; i < s.n(); ++i)
        for (std::size_t j = i + 1; j < s.n(); ++j) s(j, i) = s(i, j);
    return SymMatrix(std::move(s));
}

SymMatrix SymMatrix::checked(const Matrix& m) {
    if (!m.is_symmetric()) throw PreconditionError("matrix is not exactly symmetric");
    return SymMatrix(m);
}

Spectrum::Spectrum(std::vector<double> values) : values_(std::move(values)) {
    if (!std::is_sorted(values_.begin(), values_.end(), std::greater<>{}))
        throw PreconditionError("spectrum must be sorted non-increasing");
}

Spectrum Spectrum::sorted(std::vector<double> values) {
    std::sort(values.begin(), values.end(), std::greater<>{});
    return Spectrum(std::move(values));
}

double l1_norm(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += std::abs(x);
    return s;
}

double rel_l1(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw PreconditionError("rel_l1 shape mismatch");
    const double denom = l1_norm(b);
    if (denom == 0.0) throw DegenerateError("rel_l1 reference has zero L1 norm");
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num += std::abs(a[i] - b[i]);
    return num / denom;
}

double rel_l1(const Matrix& a, const Matrix& b) {
    require_same_n(a, b);
    return rel_l1(a.entries(), b.entries());
}

EigenDecomposition eig_sym(const SymMatrix& sym) {
    const std::size_t n = sym.n();
    Matrix a = sym.matrix();
    Matrix v = Matrix::identity(n);
    const double tol = 1e-12 * l1_norm(a.entries());

    auto off_mass = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += std::abs(a(i, j));
        return s;
    };

    bool converged = off_mass() <= tol;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                // A <- J^T A J with J the (p,q) plane rotation.
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = off_mass() <= tol;
    }
    if (!converged) {
        throw SolverError("Jacobi eigensolver did not converge in " +
                          std::to_string(kJacobiMaxSweeps) + " sweeps");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Stable so equal eigenvalues keep solver order and the result stays deterministic.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    std::vector<double> values(n);
    Matrix h(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        values[k] = a(src, src);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += v(i, src) * v(i, src);
        norm = std::sqrt(norm);
        std::size_t pivot = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(v(i, src)) > std::abs(v(pivot, src))) pivot = i;
        const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) h(i, k) = sign * v(i, src) / norm;
    }
    return {Spectrum(std::move(values)), std::move(h)};
}

Matrix invert(const Matrix& m) {
    const std::size_t n = m.n();
    require_finite(m.entries());
    const double threshold = 1e-13 * l1_norm(m.entries());
    Matrix a = m;
    Matrix inv = Matrix::identity(n);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        const double pivot = a(piv, col);
        if (!(std::abs(pivot) >= threshold) || pivot == 0.0)
            throw SingularMatrixError("matrix is numerically singular");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(piv, j), a(col, j));
                std::swap(inv(piv, j), inv(col, j));
            }
        }
        const double scale = 1.0 / pivot;
        for (std::size_t j = 0; j < n; ++j) {
            a(col, j) *= scale;
            inv(col, j) *= scale;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

double cond(const Matrix& m) {
    const Matrix gram = m.transposed() * m;
    const auto eig = eig_sym(SymMatrix::from_upper(gram));
    const auto vals = eig.spectrum.values();
    const double smax = std::sqrt(std::max(vals.front(), 0.0));
    const double smin = std::sqrt(std::max(vals.back(), 0.0));
    if (smin < 1e-300) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

SymMatrix reassemble(const Spectrum& spectrum, const Matrix& h) {
    const std::size_t n = h.n();
    if (spectrum.size() != n) throw PreconditionError("spectrum/eigenvector size mismatch");
    if (!(cond(h) < 1.0 + 1e-8)) throw PreconditionError("eigenvector matrix is not orthogonal");
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += h(i, k) * spectrum[k] * h(j, k);
            m(i, j) = s;
        }
    return SymMatrix::from_upper(m);
}

double diagonalization_residual(const Matrix& m, std::span<const double> values, const Matrix& h) {
    if (h.n() != m.n() || values.size() != m.n())
        throw PreconditionError("diagonalization shape mismatch");
    const Matrix d = h.transposed() * m * h;
    const Matrix target = Matrix::diagonal(values);
    return rel_l1(d.entries(), target.entries());
}

}  // namespace rmtlab::linalg
