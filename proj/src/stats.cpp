// SPDX-License-Identifier: Apache-2.0
#include "qrng/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>
#include <fftw3.h>

#include "qrng/protocol.hpp"

namespace qrng {

namespace {

constexpr std::array<std::string_view, 9> kTests{
    "monobit-frequency", "block-frequency", "runs",
    "longest-run",       "binary-matrix-rank", "spectral-dft",
    "serial",            "approximate-entropy", "cumulative-sums"};

double igamc(double a, double x) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(a, x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<std::uint8_t> unpack(const BitVector& bits) {
    std::vector<std::uint8_t> e(bits.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = bits[i];
    return e;
}

double monobit(const BitVector& bits) {
    const double n = static_cast<double>(bits.size());
    const double s = 2.0 * static_cast<double>(bits.popcount()) - n;
    return std::erfc(std::fabs(s) / std::sqrt(n) / std::sqrt(2.0));
}

double block_frequency(const std::vector<std::uint8_t>& e, std::size_t m) {
    const std::size_t blocks = e.size() / m;
    if (blocks == 0) throw PreconditionError("block-frequency: sequence shorter than one block");
    double chi2 = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
        const auto ones = std::accumulate(e.begin() + b * m, e.begin() + (b + 1) * m, 0u);
        const double pi = static_cast<double>(ones) / static_cast<double>(m) - 0.5;
        chi2 += pi * pi;
    }
    chi2 *= 4.0 * static_cast<double>(m);
    return igamc(blocks / 2.0, chi2 / 2.0);
}

double runs(const std::vector<std::uint8_t>& e) {
    const double n = static_cast<double>(e.size());
    const double pi = static_cast<double>(std::accumulate(e.begin(), e.end(), std::size_t{0})) / n;
    if (std::fabs(pi - 0.5) >= 2.0 / std::sqrt(n)) return 0.0;  // frequency pre-test failed
    double v = 1.0;
    for (std::size_t k = 0; k + 1 < e.size(); ++k) v += e[k] != e[k + 1];
    const double num = std::fabs(v - 2.0 * n * pi * (1.0 - pi));
    return std::erfc(num / (2.0 * std::sqrt(2.0 * n) * pi * (1.0 - pi)));
}

double longest_run(const std::vector<std::uint8_t>& e) {
    const std::size_t n = e.size();
    std::size_t m = 0;
    std::vector<std::size_t> bounds;  // class upper edges; first is "<=", last is ">="
    std::vector<double> pi;
    if (n < 128) throw PreconditionError("longest-run: need at least 128 bits");
    if (n < 6272) {
        m = 8;
        bounds = {1, 2, 3, 4};
        pi = {0.21484375, 0.3671875, 0.23046875, 0.1875};
    } else if (n < 750000) {
        m = 128;
        bounds = {4, 5, 6, 7, 8, 9};
        pi = {0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847};
    } else {
        m = 10000;
        bounds = {10, 11, 12, 13, 14, 15, 16};
        pi = {0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727};
    }
    const std::size_t blocks = n / m;
    std::vector<double> v(bounds.size(), 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::size_t longest = 0;
        std::size_t run = 0;
        for (std::size_t j = 0; j < m; ++j) {
            run = e[b * m + j] ? run + 1 : 0;
            longest = std::max(longest, run);
        }
        std::size_t cls = 0;
        while (cls + 1 < bounds.size() && longest > bounds[cls]) ++cls;
        v[cls] += 1.0;
    }
    double chi2 = 0.0;
    const double nb = static_cast<double>(blocks);
    for (std::size_t i = 0; i < v.size(); ++i) chi2 += (v[i] - nb * pi[i]) * (v[i] - nb * pi[i]) / (nb * pi[i]);
    return igamc((v.size() - 1) / 2.0, chi2 / 2.0);
}

int gf2_rank32(std::array<std::uint32_t, 32> rows) {
    int rank = 0;
    for (int col = 31; col >= 0 && rank < 32; --col) {
        const std::uint32_t bit = std::uint32_t{1} << col;
        int pivot = -1;
        for (int r = rank; r < 32; ++r) {
            if (rows[r] & bit) {
                pivot = r;
                break;
            }
        }
        if (pivot < 0) continue;
        std::swap(rows[rank], rows[pivot]);
        for (int r = 0; r < 32; ++r) {
            if (r != rank && (rows[r] & bit)) rows[r] ^= rows[rank];
        }
        ++rank;
    }
    return rank;
}

double rank_probability(int r, int rows, int cols) {
    double product = 1.0;
    for (int i = 0; i < r; ++i) {
        product *= (1.0 - std::ldexp(1.0, i - rows)) * (1.0 - std::ldexp(1.0, i - cols)) /
                   (1.0 - std::ldexp(1.0, i - r));
    }
    return std::ldexp(product, r * (rows + cols - r) - rows * cols);
}

double binary_matrix_rank(const BitVector& bits) {
    constexpr std::size_t kMatrixBits = 32 * 32;
    const std::size_t matrices = bits.size() / kMatrixBits;
    if (matrices == 0) throw PreconditionError("binary-matrix-rank: need at least 1024 bits");
    double full = 0.0;
    double minus_one = 0.0;
    for (std::size_t k = 0; k < matrices; ++k) {
        std::array<std::uint32_t, 32> rows{};
        for (std::size_t r = 0; r < 32; ++r) {
            rows[r] = static_cast<std::uint32_t>(bits.word_at(k * kMatrixBits + 32 * r) >> 32);
        }
        const int rank = gf2_rank32(rows);
        if (rank == 32) {
            full += 1.0;
        } else if (rank == 31) {
            minus_one += 1.0;
        }
    }
    const double n = static_cast<double>(matrices);
    const double p32 = rank_probability(32, 32, 32);
    const double p31 = rank_probability(31, 32, 32);
    const double p30 = 1.0 - p32 - p31;
    const double rest = n - full - minus_one;
    const double chi2 = (full - p32 * n) * (full - p32 * n) / (p32 * n) +
                        (minus_one - p31 * n) * (minus_one - p31 * n) / (p31 * n) +
                        (rest - p30 * n) * (rest - p30 * n) / (p30 * n);
    return std::exp(-chi2 / 2.0);
}

double spectral_dft(const std::vector<std::uint8_t>& e) {
    const std::size_t n = e.size();
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    for (std::size_t i = 0; i < n; ++i) in[i] = e[i] ? 1.0 : -1.0;
    fftw_execute(plan);
    const double threshold = std::sqrt(std::log(1.0 / 0.05) * static_cast<double>(n));
    double below = 0.0;
    for (std::size_t j = 0; j < n / 2; ++j) {
        if (std::hypot(out[j][0], out[j][1]) < threshold) below += 1.0;
    }
    fftw_destroy_plan(plan);
    fftw_free(out);
    fftw_free(in);
    const double nd = static_cast<double>(n);
    const double expected = 0.95 * nd / 2.0;
    const double d = (below - expected) / std::sqrt(nd * 0.95 * 0.05 / 4.0);
    return std::erfc(std::fabs(d) / std::sqrt(2.0));
}

/// Wrap-around overlapping pattern counts for length m.
std::vector<std::uint64_t> pattern_counts(const std::vector<std::uint8_t>& e, std::size_t m) {
    const std::size_t n = e.size();
    std::vector<std::uint64_t> counts(std::size_t{1} << m, 0);
    const std::uint32_t mask = static_cast<std::uint32_t>((std::uint64_t{1} << m) - 1);
    std::uint32_t window = 0;
    for (std::size_t i = 0; i < m - 1; ++i) window = (window << 1) | e[i];
    for (std::size_t i = 0; i < n; ++i) {
        window = ((window << 1) | e[(i + m - 1) % n]) & mask;
        ++counts[window];
    }
    return counts;
}

/// Counts for patterns one bit shorter, by summing over the final bit.
std::vector<std::uint64_t> marginalize(const std::vector<std::uint64_t>& counts) {
    std::vector<std::uint64_t> out(counts.size() / 2);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = counts[2 * k] + counts[2 * k + 1];
    return out;
}

double psi_squared(const std::vector<std::uint64_t>& counts, std::size_t n) {
    double sum = 0.0;
    for (auto c : counts) sum += static_cast<double>(c) * static_cast<double>(c);
    return static_cast<double>(counts.size()) / static_cast<double>(n) * sum - static_cast<double>(n);
}

double approximate_entropy(const std::vector<std::uint8_t>& e, std::size_t m) {
    const std::size_t n = e.size();
    const auto counts_next = pattern_counts(e, m + 1);
    const auto counts = marginalize(counts_next);
    auto phi = [n](const std::vector<std::uint64_t>& c) {
        double s = 0.0;
        for (auto k : c) {
            if (k == 0) continue;
            const double p = static_cast<double>(k) / static_cast<double>(n);
            s += p * std::log(p);
        }
        return s;
    };
    const double apen = phi(counts) - phi(counts_next);
    const double chi2 = 2.0 * static_cast<double>(n) * (std::log(2.0) - apen);
    return igamc(std::ldexp(1.0, static_cast<int>(m) - 1), chi2 / 2.0);
}

double cumulative_sums(const std::vector<std::uint8_t>& e) {
    const int n = static_cast<int>(e.size());
    long long s = 0;
    long long z = 0;
    for (auto bit : e) {
        s += bit ? 1 : -1;
        z = std::max(z, s < 0 ? -s : s);
    }
    if (z == 0) return 1.0;
    const double nd = n;
    const double zd = static_cast<double>(z);
    const double sqrt_n = std::sqrt(nd);
    double sum1 = 0.0;
    for (int k = static_cast<int>((-nd / zd + 1.0) / 4.0); k <= static_cast<int>((nd / zd - 1.0) / 4.0); ++k) {
        sum1 += normal_cdf((4.0 * k + 1.0) * zd / sqrt_n) - normal_cdf((4.0 * k - 1.0) * zd / sqrt_n);
    }
    double sum2 = 0.0;
    for (int k = static_cast<int>((-nd / zd - 3.0) / 4.0); k <= static_cast<int>((nd / zd - 1.0) / 4.0); ++k) {
        sum2 += normal_cdf((4.0 * k + 3.0) * zd / sqrt_n) - normal_cdf((4.0 * k + 1.0) * zd / sqrt_n);
    }
    return std::clamp(1.0 - sum1 + sum2, 0.0, 1.0);
}

}  // namespace

std::span<const std::string_view> implemented_tests() { return kTests; }

std::pair<double, double> serial_p_values(const BitVector& block, std::size_t m) {
    if (m < 3 || m > 24) throw std::invalid_argument("serial: m must lie in [3, 24]");
    const auto e = unpack(block);
    const std::size_t n = e.size();
    if (n < (std::size_t{1} << m)) throw PreconditionError("serial: sequence too short for pattern length");
    const auto c_m = pattern_counts(e, m);
    const auto c_m1 = marginalize(c_m);
    const auto c_m2 = marginalize(c_m1);
    const double psi_m = psi_squared(c_m, n);
    const double psi_m1 = psi_squared(c_m1, n);
    const double psi_m2 = psi_squared(c_m2, n);
    const double del1 = psi_m - psi_m1;
    const double del2 = psi_m - 2.0 * psi_m1 + psi_m2;
    return {igamc(std::ldexp(1.0, static_cast<int>(m) - 2), del1 / 2.0),
            igamc(std::ldexp(1.0, static_cast<int>(m) - 3), del2 / 2.0)};
}

double run_test(std::string_view test_id, const BitVector& block, std::size_t block_size,
                const StatsParameters& params) {
    if (std::find(kTests.begin(), kTests.end(), test_id) == kTests.end()) {
        throw std::invalid_argument("run_test: unknown test id '" + std::string(test_id) + "'");
    }
    if (block.size() != block_size) {
        throw std::invalid_argument("run_test: block has " + std::to_string(block.size()) +
                                    " bits, expected " + std::to_string(block_size));
    }
    if (block.empty()) throw std::invalid_argument("run_test: empty block");

    if (test_id == "monobit-frequency") return monobit(block);
    if (test_id == "binary-matrix-rank") return binary_matrix_rank(block);
    if (test_id == "serial") return serial_p_values(block, params.serial_m).first;

    const auto e = unpack(block);
    if (test_id == "block-frequency") return block_frequency(e, params.block_frequency_m);
    if (test_id == "runs") return runs(e);
    if (test_id == "longest-run") return longest_run(e);
    if (test_id == "spectral-dft") return spectral_dft(e);
    if (test_id == "approximate-entropy") return approximate_entropy(e, params.approximate_entropy_m);
    return cumulative_sums(e);
}

ProportionInterval proportion_confidence(double alpha, std::size_t blocks) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("proportion_confidence: alpha must lie in (0, 1)");
    if (blocks == 0) throw std::invalid_argument("proportion_confidence: need at least one block");
    const double centre = 1.0 - alpha;
    const double half = 3.0 * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(blocks));
    return {centre - half, centre + half};
}

std::vector<TestReport> run_suite(const BitVector& bits, std::size_t block_size, double alpha,
                                  const StatsParameters& params) {
    if (block_size == 0) throw std::invalid_argument("run_suite: block size must be > 0");
    const std::size_t blocks = bits.size() / block_size;
    if (blocks < 2) {
        throw PreconditionError("run_suite: need at least two full blocks of " + std::to_string(block_size) +
                                " bits, got " + std::to_string(bits.size()) + " bits");
    }
    std::vector<TestReport> reports;
    for (auto id : kTests) {
        TestReport r;
        r.test_name = std::string(id);
        r.p_values.reserve(blocks);
        reports.push_back(std::move(r));
    }
    for (std::size_t b = 0; b < blocks; ++b) {
        const BitVector block = bits.slice(b * block_size, block_size);
        for (std::size_t t = 0; t < kTests.size(); ++t) {
            reports[t].p_values.push_back(run_test(kTests[t], block, block_size, params));
        }
    }
    const auto interval = proportion_confidence(alpha, blocks);
    for (auto& r : reports) {
        const double nb = static_cast<double>(blocks);
        double sum = 0.0;
        std::size_t passes = 0;
        for (double p : r.p_values) {
            sum += p;
            passes += p >= alpha;
        }
        r.mean_p = sum / nb;
        double var = 0.0;
        for (double p : r.p_values) var += (p - r.mean_p) * (p - r.mean_p);
        r.std_p = blocks > 1 ? std::sqrt(var / (nb - 1.0)) : 0.0;
        r.pass_proportion = static_cast<double>(passes) / nb;
        r.interval = interval;
        r.passed = r.pass_proportion >= interval.lo;
    }
    return reports;
}

}  // namespace qrng
