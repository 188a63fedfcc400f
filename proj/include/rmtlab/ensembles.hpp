#pragma once

// Seeded random matrix ensembles. Every sample is a pure function of
// (config, index, attempt), so datasets can be generated in any order and
// sharded across threads without changing a single bit.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmtlab/linalg.hpp"

namespace rmtlab::ensembles {

enum class Kind {
    wigner_uniform_general,
    wigner_uniform_symmetric,
    wigner_gaussian_symmetric,
    semicircle,
    uniform,
    gaussian,
    laplace,
    abs_semicircle,
    abs_laplace,
    marchenko_pastur,
};

std::string_view name(Kind kind);
// Accepts the canonical names plus "abs-semicircle"/"abs-laplace" spellings.
// Throws PreconditionError on unknown names.
Kind parse_kind(std::string_view text);
const std::vector<Kind>& all_kinds();
// The seven eigenvalue laws compared in the OOD grids, in table order.
const std::vector<Kind>& table_kinds();

bool is_symmetric_kind(Kind kind);
// Kinds whose spectrum is replaced by an iid draw.
bool is_replacement_kind(Kind kind);

inline const double kDefaultSigma = 10.0 / std::sqrt(3.0);

struct EnsembleConfig {
    Kind kind = Kind::semicircle;
    std::size_t n = 5;
    double sigma = kDefaultSigma;  // coefficient standard deviation
    std::uint64_t seed = 0;
    // Standard deviation of replacement spectra; defaults to sigma * sqrt(n),
    // the eigenvalue spread of the Wigner base ensemble.
    std::optional<double> spectrum_scale;

    double effective_spectrum_scale() const;
    void validate() const;  // n >= 2, sigma > 0, scale > 0
};

struct Sample {
    linalg::Matrix matrix;
    // The spectrum substituted into the base ensemble, for replacement kinds.
    std::optional<linalg::Spectrum> replaced;
};

// `attempt` selects an independent retry stream for the same index.
Sample sample_detailed(const EnsembleConfig& cfg, std::uint64_t index, std::uint64_t attempt = 0);
linalg::Matrix sample_matrix(const EnsembleConfig& cfg, std::uint64_t index,
                             std::uint64_t attempt = 0);

// n iid draws with standard deviation `scale`, sorted non-increasing.
// kind must be uniform, gaussian, laplace or abs_laplace.
linalg::Spectrum sample_spectrum(Kind kind, std::size_t n, double scale, std::uint64_t sub_seed);

struct QuantileReport {
    double median = 0.0;
    double q3 = 0.0;
    double p90 = 0.0;
    std::size_t count = 0;
};

// Linear interpolation between order statistics; sorts `xs` in place.
double quantile(std::vector<double>& xs, double q);

std::vector<double> condition_numbers(const EnsembleConfig& cfg, std::size_t count, int workers = 1);
QuantileReport condition_stats(const EnsembleConfig& cfg, std::size_t count, int workers = 1);
double positive_fraction(const EnsembleConfig& cfg, std::size_t count, int workers = 1);

namespace serial {
// Single-threaded references kept for equivalence tests and benchmarks.
std::vector<double> condition_numbers(const EnsembleConfig& cfg, std::size_t count);
double positive_fraction(const EnsembleConfig& cfg, std::size_t count);
}  // namespace serial

}  // namespace rmtlab::ensembles
