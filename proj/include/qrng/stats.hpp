// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrng/bits.hpp"

namespace qrng {

inline constexpr std::size_t kDefaultStatsBlock = 1'000'000;
inline constexpr double kDefaultAlpha = 0.01;

/// Identifiers of the implemented tests, in report order.
std::span<const std::string_view> implemented_tests();

/// Per-test parameters (SP 800-22 defaults).
struct StatsParameters {
    std::size_t block_frequency_m = 128;
    std::size_t serial_m = 16;
    std::size_t approximate_entropy_m = 10;
};

/// p-value of one test on `block`, which must hold exactly `block_size` bits.
double run_test(std::string_view test_id, const BitVector& block, std::size_t block_size = kDefaultStatsBlock,
                const StatsParameters& params = {});

/// Both serial-test p-values (del psi^2, del^2 psi^2).
std::pair<double, double> serial_p_values(const BitVector& block, std::size_t m = 16);

struct ProportionInterval {
    double lo;
    double hi;
};

/// (1 - alpha) -/+ 3 sqrt(alpha (1 - alpha) / b)
ProportionInterval proportion_confidence(double alpha, std::size_t blocks);

struct TestReport {
    std::string test_name;
    std::vector<double> p_values;
    double mean_p = 0.0;
    double std_p = 0.0;
    double pass_proportion = 0.0;
    ProportionInterval interval{};
    bool passed = false;
};

/// Splits `bits` into non-overlapping blocks (leftover ignored) and runs every
/// implemented test on each. Needs at least two full blocks.
std::vector<TestReport> run_suite(const BitVector& bits, std::size_t block_size = kDefaultStatsBlock,
                                  double alpha = kDefaultAlpha, const StatsParameters& params = {});

}  // namespace qrng
