// SPDX-License-Identifier: Apache-2.0
#include "qrng/extract.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "qrng/protocol.hpp"

namespace qrng {

double estimate_min_entropy_8(const BitVector& bits) {
    if (bits.size() < 8 * 256) {
        throw PreconditionError("estimate_min_entropy_8: need at least 2048 bits");
    }
    std::array<std::uint64_t, 256> histogram{};
    const std::size_t bytes = bits.size() / 8;
    const auto words = bits.words();
    for (std::size_t k = 0; k < bytes; ++k) {
        ++histogram[(words[k >> 3] >> (56 - 8 * (k & 7))) & 0xFF];
    }
    const auto max_count = *std::max_element(histogram.begin(), histogram.end());
    const double p_max = static_cast<double>(max_count) / static_cast<double>(bytes);
    return p_max >= 1.0 ? 0.0 : -std::log2(p_max);
}

std::size_t output_length(double h8, std::size_t n, double epsilon_log2) {
    const double entropy = static_cast<double>(n) / 8.0 * h8;
    // 2 log2(1/eps) = -2 log2(eps)
    const double m = std::floor(entropy + 2.0 * epsilon_log2);
    if (m <= 0.0) return 0;
    return std::min(n, static_cast<std::size_t>(m));
}

ExtractionParams ExtractionParams::from_entropy(double h8, std::size_t n, double epsilon_log2) {
    if (!(h8 >= 0.0 && h8 <= 8.0)) throw std::invalid_argument("extraction: h8 must lie in [0, 8]");
    if (n == 0 || n % 8 != 0) throw std::invalid_argument("extraction: n must be a positive multiple of 8");
    if (!(epsilon_log2 <= 0.0)) throw std::invalid_argument("extraction: epsilon must lie in (0, 1]");
    ExtractionParams p;
    p.n = n;
    p.epsilon_log2 = epsilon_log2;
    p.h8 = h8;
    p.m = output_length(h8, n, epsilon_log2);
    return p;
}

ToeplitzMatrix::ToeplitzMatrix(const BitVector& seed, std::size_t n, std::size_t m)
    : n_(n), m_(m), words_per_row_((n + 63) / 64), seed_(seed) {
    if (n == 0 || m == 0) throw std::invalid_argument("toeplitz: n and m must be positive");
    if (seed.size() != n + m - 1) {
        throw std::invalid_argument("toeplitz: seed must have n + m - 1 = " + std::to_string(n + m - 1) +
                                    " bits, got " + std::to_string(seed.size()));
    }
    // Row i is the window seed[m-1-i .. m-1-i+n).
    rows_.assign(m * words_per_row_, 0);
    const unsigned tail = n % 64;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t start = m - 1 - i;
        for (std::size_t w = 0; w < words_per_row_; ++w) {
            rows_[i * words_per_row_ + w] = seed_.word_at(start + 64 * w);
        }
        if (tail != 0) rows_[i * words_per_row_ + words_per_row_ - 1] &= ~(~std::uint64_t{0} >> tail);
    }
}

void ToeplitzMatrix::multiply(const BitVector& input, std::size_t offset, BitVector& out) const {
    if (offset + n_ > input.size()) throw std::out_of_range("toeplitz: input block out of range");
    std::array<std::uint64_t, 64> x_small{};
    std::vector<std::uint64_t> x_large;
    std::uint64_t* x = x_small.data();
    if (words_per_row_ > x_small.size()) {
        x_large.resize(words_per_row_);
        x = x_large.data();
    }
    const unsigned tail = n_ % 64;
    for (std::size_t w = 0; w < words_per_row_; ++w) x[w] = input.word_at(offset + 64 * w);
    if (tail != 0) x[words_per_row_ - 1] &= ~(~std::uint64_t{0} >> tail);

    const std::uint64_t* row = rows_.data();
    for (std::size_t i = 0; i < m_; ++i, row += words_per_row_) {
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < words_per_row_; ++w) acc ^= row[w] & x[w];
        out.push_back(std::popcount(acc) & 1);
    }
}

BitVector ToeplitzMatrix::multiply(const BitVector& x) const {
    if (x.size() != n_) throw std::invalid_argument("toeplitz: input must have n bits");
    BitVector out;
    out.reserve(m_);
    multiply(x, 0, out);
    return out;
}

ToeplitzMatrix build_toeplitz(const BitVector& seed, std::size_t n, std::size_t m) {
    return ToeplitzMatrix(seed, n, m);
}

BitVector extract(const BitVector& raw, const ExtractionParams& params) {
    if (params.m == 0) throw PreconditionError("extract: output length m is 0 (entropy below security cost)");
    const std::size_t seed_bits = params.seed_length();
    if (raw.size() < seed_bits + params.n) {
        throw PreconditionError("extract: need at least n + m - 1 + n = " +
                                std::to_string(seed_bits + params.n) + " raw bits, got " +
                                std::to_string(raw.size()));
    }
    const ToeplitzMatrix matrix(raw.slice(0, seed_bits), params.n, params.m);
    const std::size_t blocks = (raw.size() - seed_bits) / params.n;
    BitVector out;
    out.reserve(blocks * params.m);
    for (std::size_t b = 0; b < blocks; ++b) matrix.multiply(raw, seed_bits + b * params.n, out);
    return out;
}

}  // namespace qrng
