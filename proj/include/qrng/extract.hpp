// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "qrng/bits.hpp"

namespace qrng {

inline constexpr std::size_t kDefaultExtractorInput = 400;
inline constexpr double kDefaultEpsilonLog2 = -100.0;

/// -log2 of the largest empirical frequency among non-overlapping 8-bit
/// strings. Needs at least 8 * 256 bits.
double estimate_min_entropy_8(const BitVector& bits);

/// Leftover-hash output length m = floor((n/8) h8 - 2 log2(1/eps)),
/// clamped to [0, n]. `epsilon_log2` is log2(eps), e.g. -100.
std::size_t output_length(double h8, std::size_t n, double epsilon_log2);

struct ExtractionParams {
    std::size_t n = kDefaultExtractorInput;
    double epsilon_log2 = kDefaultEpsilonLog2;
    double h8 = 0.0;
    std::size_t m = 0;

    /// Fills m from h8, n and epsilon.
    static ExtractionParams from_entropy(double h8, std::size_t n = kDefaultExtractorInput,
                                         double epsilon_log2 = kDefaultEpsilonLog2);
    std::size_t seed_length() const { return n + m - 1; }
};

/// m x n Toeplitz matrix over GF(2) defined by n + m - 1 seed bits:
/// T[i][j] = seed[(m - 1) + j - i]. The first column is seed[0..m) read
/// bottom-up and the first row is seed[m-1..n+m-1) read left to right.
class ToeplitzMatrix {
  public:
    ToeplitzMatrix(const BitVector& seed, std::size_t n, std::size_t m);

    std::size_t rows() const { return m_; }
    std::size_t cols() const { return n_; }
    bool at(std::size_t i, std::size_t j) const { return seed_[(m_ - 1) + j - i]; }
    const BitVector& seed() const { return seed_; }

    /// T * x for `x` = bits [offset, offset + n) of `input`; appends m bits to `out`.
    void multiply(const BitVector& input, std::size_t offset, BitVector& out) const;
    BitVector multiply(const BitVector& x) const;

  private:
    std::size_t n_;
    std::size_t m_;
    std::size_t words_per_row_;
    BitVector seed_;
    std::vector<std::uint64_t> rows_;  // packed rows, words_per_row_ each
};

ToeplitzMatrix build_toeplitz(const BitVector& seed, std::size_t n, std::size_t m);

/// Consumes the first n + m - 1 bits as the seed and hashes every following
/// full n-bit block; the trailing partial block is dropped.
BitVector extract(const BitVector& raw, const ExtractionParams& params);

}  // namespace qrng
