#pragma once

#include <cstdint>
#include <random>

namespace psda {

// Single-owner random source for one run. Every stochastic step draws from
// an Rng passed in explicitly, so a seed fixes the whole run.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Beta(a, b) via the ratio of two Gamma draws.
inline double sample_beta(Rng& rng, double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

}  // namespace psda
