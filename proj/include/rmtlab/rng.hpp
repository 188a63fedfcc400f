#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rmtlab {

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based stream keyed by a 128-bit mix of (seed, index, stream).
// Draw k of a stream depends only on the key and k, so any example can be
// regenerated in isolation and index ranges can be sampled in parallel.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0) noexcept {
        key_hi_ = mix64(seed ^ 0x9e3779b97f4a7c15ULL);
        key_lo_ = mix64(index + mix64(key_hi_ ^ 0xd1b54a32d192ed03ULL));
        key_lo_ = mix64(key_lo_ ^ (stream * 0x8cb92ba72f3d8dd7ULL + 0x632be59bd9b4e019ULL));
        key_hi_ ^= mix64(key_lo_ + 0x2545f4914f6cdd1dULL);
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t c = counter_++;
        return mix64(mix64(key_hi_ + c * 0x9e3779b97f4a7c15ULL) ^ key_lo_);
    }

    // [0, 1)
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1), never an endpoint.
    double open_uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the second variate of each pair is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = open_uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

    // Inverse CDF, scale b.
    double laplace(double b) noexcept {
        const double u = open_uniform() - 0.5;
        return -b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_hi_ = 0;
    std::uint64_t key_lo_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rmtlab
