#pragma once

// Dense linear algebra on small square matrices: symmetric eigendecomposition
// by cyclic Jacobi, Gauss-Jordan inversion, condition numbers and the
// elementwise L1 residuals the metrics are built on.

#include <cstddef>
#include <span>
#include <vector>

namespace rmtlab::linalg {

// n x n, row-major, all entries finite.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n);  // zero matrix
    Matrix(std::size_t n, std::vector<double> entries);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t n() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

    std::span<const double> entries() const noexcept { return data_; }
    std::span<double> entries() noexcept { return data_; }

    Matrix transposed() const;
    bool is_symmetric() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix operator-(const Matrix& a, const Matrix& b);

// A Matrix whose entries are exactly mirrored across the diagonal.
class SymMatrix {
public:
    SymMatrix() = default;

    // Keeps the upper triangle of `m` and mirrors it.
    static SymMatrix from_upper(const Matrix& m);
    // Requires exact symmetry; throws PreconditionError otherwise.
    static SymMatrix checked(const Matrix& m);

    std::size_t n() const noexcept { return m_.n(); }
    double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    explicit SymMatrix(Matrix m) : m_(std::move(m)) {}
    Matrix m_;
};

// Eigenvalues sorted non-increasing.
class Spectrum {
public:
    Spectrum() = default;
    // Throws PreconditionError unless `values` is already non-increasing.
    explicit Spectrum(std::vector<double> values);
    static Spectrum sorted(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const Spectrum&, const Spectrum&) = default;

private:
    std::vector<double> values_;
};

// Columns of `vectors` are unit eigenvectors; column k pairs with spectrum[k].
// The largest-magnitude entry of every column is positive (lowest index on ties).
struct EigenDecomposition {
    Spectrum spectrum;
    Matrix vectors;
};

inline constexpr int kJacobiMaxSweeps = 50;

EigenDecomposition eig_sym(const SymMatrix& m);

// Gauss-Jordan with partial pivoting. Throws SingularMatrixError when a pivot
// falls below 1e-13 * l1_norm(m).
Matrix invert(const Matrix& m);

// Ratio of extreme singular values from eig_sym(m^T m); +inf when the
// smallest singular value is below 1e-300.
double cond(const Matrix& m);

// Sum of absolute entries.
double l1_norm(std::span<const double> a);

// ||a - b||_1 / ||b||_1. Throws DegenerateError when ||b||_1 == 0.
double rel_l1(std::span<const double> a, std::span<const double> b);
double rel_l1(const Matrix& a, const Matrix& b);

// h * diag(spectrum) * h^T. Requires cond(h) < 1 + 1e-8.
SymMatrix reassemble(const Spectrum& spectrum, const Matrix& h);

// Off-diagonal-aware residual ||H^T M H - diag(values)||_1 / ||values||_1.
double diagonalization_residual(const Matrix& m, std::span<const double> values, const Matrix& h);

}  // namespace rmtlab::linalg
