#include "rmtlab/ensembles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <omp.h>

#include "rmtlab/error.hpp"
#include "rmtlab/rng.hpp"

namespace rmtlab::ensembles {

namespace {

using linalg::Matrix;
using linalg::Spectrum;
using linalg::SymMatrix;

constexpr std::array<std::pair<Kind, std::string_view>, 10> kNames{{
    {Kind::wigner_uniform_general, "wigner_uniform_general"},
    {Kind::wigner_uniform_symmetric, "wigner_uniform_symmetric"},
    {Kind::wigner_gaussian_symmetric, "wigner_gaussian_symmetric"},
    {Kind::semicircle, "semicircle"},
    {Kind::uniform, "uniform"},
    {Kind::gaussian, "gaussian"},
    {Kind::laplace, "laplace"},
    {Kind::abs_semicircle, "abs_semicircle"},
    {Kind::abs_laplace, "abs_laplace"},
    {Kind::marchenko_pastur, "marchenko_pastur"},
}};

Matrix gaussian_symmetric(std::size_t n, double sigma, CounterRng& rng) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m(i, j) = sigma * rng.normal();
    return SymMatrix::from_upper(m).matrix();
}

Matrix uniform_symmetric(std::size_t n, double half_width, CounterRng& rng) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m(i, j) = rng.uniform(-half_width, half_width);
    return SymMatrix::from_upper(m).matrix();
}

double smallest_eigenvalue(const Matrix& m) {
    return linalg::eig_sym(SymMatrix::checked(m)).spectrum.values().back();
}

}  // namespace

std::string_view name(Kind kind) {
    for (const auto& [k, s] : kNames)
        if (k == kind) return s;
    return "unknown";
}

Kind parse_kind(std::string_view text) {
    std::string norm(text);
    std::replace(norm.begin(), norm.end(), '-', '_');
    for (const auto& [k, s] : kNames)
        if (s == norm) return k;
    if (norm == "abs_sc") return Kind::abs_semicircle;
    if (norm == "mp" || norm == "marchenko") return Kind::marchenko_pastur;
    throw PreconditionError("unknown ensemble kind '" + std::string(text) + "'");
}

const std::vector<Kind>& all_kinds() {
    static const std::vector<Kind> kinds = [] {
        std::vector<Kind> v;
        for (const auto& [k, s] : kNames) v.push_back(k);
        return v;
    }();
    return kinds;
}

const std::vector<Kind>& table_kinds() {
    static const std::vector<Kind> kinds{Kind::semicircle,     Kind::uniform,     Kind::gaussian,
                                         Kind::laplace,        Kind::abs_semicircle,
                                         Kind::abs_laplace,    Kind::marchenko_pastur};
    return kinds;
}

bool is_symmetric_kind(Kind kind) { return kind != Kind::wigner_uniform_general; }

bool is_replacement_kind(Kind kind) {
    return kind == Kind::uniform || kind == Kind::gaussian || kind == Kind::laplace ||
           kind == Kind::abs_laplace;
}

double EnsembleConfig::effective_spectrum_scale() const {
    return spectrum_scale.value_or(sigma * std::sqrt(static_cast<double>(n)));
}

void EnsembleConfig::validate() const {
    if (n < 2) throw PreconditionError("ensemble n must be at least 2");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw PreconditionError("sigma must be positive");
    if (spectrum_scale && !(*spectrum_scale > 0.0))
        throw PreconditionError("spectrum scale must be positive");
}

Spectrum sample_spectrum(Kind kind, std::size_t n, double scale, std::uint64_t sub_seed) {
    CounterRng rng(sub_seed, 0, 1);
    std::vector<double> values(n);
    switch (kind) {
        case Kind::uniform: {
            const double half = scale * std::sqrt(3.0);
            for (double& v : values) v = rng.uniform(-half, half);
            break;
        }
        case Kind::gaussian:
            for (double& v : values) v = scale * rng.normal();
            break;
        case Kind::laplace:
            for (double& v : values) v = rng.laplace(scale / std::sqrt(2.0));
            break;
        case Kind::abs_laplace:
            for (double& v : values) v = std::abs(rng.laplace(scale / std::sqrt(2.0)));
            break;
        default:
            throw PreconditionError("sample_spectrum does not support kind " +
                                    std::string(name(kind)));
    }
    return Spectrum::sorted(std::move(values));
}

Sample sample_detailed(const EnsembleConfig& cfg, std::uint64_t index, std::uint64_t attempt) {
    cfg.validate();
    CounterRng rng(cfg.seed, index, attempt);
    const std::size_t n = cfg.n;
    const double half_width = cfg.sigma * std::sqrt(3.0);

    switch (cfg.kind) {
        case Kind::wigner_uniform_general: {
            std::vector<double> e(n * n);
            for (double& x : e) x = rng.uniform(-half_width, half_width);
            return {Matrix(n, std::move(e)), std::nullopt};
        }
        case Kind::wigner_uniform_symmetric:
            return {uniform_symmetric(n, half_width, rng), std::nullopt};
        case Kind::wigner_gaussian_symmetric:
        case Kind::semicircle:
            return {gaussian_symmetric(n, cfg.sigma, rng), std::nullopt};
        case Kind::abs_semicircle: {
            const Matrix base = gaussian_symmetric(n, cfg.sigma, rng);
            const auto eig = linalg::eig_sym(SymMatrix::checked(base));
            // |lambda_k| stays paired with its own eigenvector; columns follow the sort.
            std::vector<std::size_t> order(n);
            for (std::size_t k = 0; k < n; ++k) order[k] = k;
            const auto vals = eig.spectrum.values();
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::abs(vals[a]) > std::abs(vals[b]);
            });
            std::vector<double> abs_values(n);
            Matrix h(n);
            for (std::size_t k = 0; k < n; ++k) {
                abs_values[k] = std::abs(vals[order[k]]);
                for (std::size_t i = 0; i < n; ++i) h(i, k) = eig.vectors(i, order[k]);
            }
            const Spectrum replaced(std::move(abs_values));
            return {linalg::reassemble(replaced, h).matrix(), replaced};
        }
        case Kind::uniform:
        case Kind::gaussian:
        case Kind::laplace:
        case Kind::abs_laplace: {
            const Matrix base = gaussian_symmetric(n, cfg.sigma, rng);
            const auto eig = linalg::eig_sym(SymMatrix::checked(base));
            const Spectrum replaced =
                sample_spectrum(cfg.kind, n, cfg.effective_spectrum_scale(), rng.next_u64());
            return {linalg::reassemble(replaced, eig.vectors).matrix(), replaced};
        }
        case Kind::marchenko_pastur: {
            const double sd = std::sqrt(cfg.sigma);
            std::vector<double> e(n * n);
            for (double& x : e) x = sd * rng.normal();
            const Matrix nm(n, std::move(e));
            const Matrix gram = nm.transposed() * nm;
            return {SymMatrix::from_upper(gram).matrix(), std::nullopt};
        }
    }
    throw PreconditionError("unhandled ensemble kind");
}

Matrix sample_matrix(const EnsembleConfig& cfg, std::uint64_t index, std::uint64_t attempt) {
    return sample_detailed(cfg, index, attempt).matrix;
}

double quantile(std::vector<double>& xs, double q) {
    if (xs.empty()) throw DegenerateError("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (std::isinf(xs[lo]) || std::isinf(xs[hi])) return frac == 0.0 ? xs[lo] : xs[hi];
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

std::vector<double> condition_numbers(const EnsembleConfig& cfg, std::size_t count, int workers) {
    cfg.validate();
    std::vector<double> out(count);
    const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(static)
    for (std::int64_t i = 0; i < total; ++i) {
        out[static_cast<std::size_t>(i)] =
            linalg::cond(sample_matrix(cfg, static_cast<std::uint64_t>(i)));
    }
    return out;
}

QuantileReport condition_stats(const EnsembleConfig& cfg, std::size_t count, int workers) {
    if (count < 1000) throw PreconditionError("condition_stats needs count >= 1000");
    std::vector<double> c = condition_numbers(cfg, count, workers);
    QuantileReport r;
    r.count = count;
    r.median = quantile(c, 0.5);
    r.q3 = quantile(c, 0.75);
    r.p90 = quantile(c, 0.9);
    return r;
}

double positive_fraction(const EnsembleConfig& cfg, std::size_t count, int workers) {
    if (count < 10000) throw PreconditionError("positive_fraction needs count >= 10000");
    cfg.validate();
    std::int64_t positives = 0;
    const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(static) reduction(+ : positives)
    for (std::int64_t i = 0; i < total; ++i) {
        if (smallest_eigenvalue(sample_matrix(cfg, static_cast<std::uint64_t>(i))) > 0.0)
            ++positives;
    }
    return static_cast<double>(positives) / static_cast<double>(count);
}

namespace serial {

std::vector<double> condition_numbers(const EnsembleConfig& cfg, std::size_t count) {
    cfg.validate();
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(linalg::cond(sample_matrix(cfg, i)));
    return out;
}

double positive_fraction(const EnsembleConfig& cfg, std::size_t count) {
    cfg.validate();
    std::size_t positives = 0;
    for (std::size_t i = 0; i < count; ++i)
        if (smallest_eigenvalue(sample_matrix(cfg, i)) > 0.0) ++positives;
    return static_cast<double>(positives) / static_cast<double>(count);
}

}  // namespace serial

}  // namespace rmtlab::ensembles
