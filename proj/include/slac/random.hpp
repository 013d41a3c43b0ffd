#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace slac {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stable seed for a grid cell: hash of the root seed and the cell coordinates.
/// Used so that serial and parallel runs draw identical streams.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = mix64(root);
    for (auto c : coords) h = mix64(h ^ mix64(c + 0x632BE59BD9B4E019ULL));
    return h;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double uniform_phase(Rng& rng) {
    return uniform(rng, -std::numbers::pi, std::numbers::pi);
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline std::complex<double> complex_normal(Rng& rng, double variance) {
    if (variance <= 0.0) return {0.0, 0.0};
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

}  // namespace slac
