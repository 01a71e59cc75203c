// SPDX-License-Identifier: Apache-2.0
#include "qrng/random.hpp"

#include <limits>

namespace qrng {

namespace {

// Hormann (1993), transformed rejection with squeeze; valid for mean >= 10.
std::uint64_t poisson_ptrs(Rng& rng, double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
        const double rhs = -mean + k * loglam - std::lgamma(k + 1.0);
        if (lhs <= rhs) return static_cast<std::uint64_t>(k);
    }
}

}  // namespace

std::uint64_t Rng::poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean >= 10.0) return poisson_ptrs(*this, mean);
    // inversion by sequential search
    double p = std::exp(-mean);
    double cdf = p;
    const double u = uniform();
    std::uint64_t k = 0;
    while (u >= cdf) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
        if (p < std::numeric_limits<double>::min() && cdf < u) break;  // fp tail exhausted
    }
    return k;
}

std::uint64_t Rng::geometric(double p) {
    if (p >= 1.0) return 0;
    if (!(p > 0.0)) return std::numeric_limits<std::uint64_t>::max();
    return geometric_log(std::log1p(-p));
}

std::uint64_t Rng::geometric_log(double log_q) {
    const double g = std::floor(std::log(uniform_open0()) / log_q);
    if (g >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(g);
}

}  // namespace qrng
