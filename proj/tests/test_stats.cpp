#include <doctest.h>

#include <sodium.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "qrng/protocol.hpp"
#include "qrng/stats.hpp"

using namespace qrng;

namespace {

BitVector bits(std::string_view s) { return BitVector::from_string(s); }

double p_value(std::string_view id, std::string_view s, StatsParameters params = {}) {
    const auto b = bits(s);
    return run_test(id, b, b.size(), params);
}

BitVector chacha_stream(std::size_t n_bits, unsigned char tag) {
    unsigned char seed[randombytes_SEEDBYTES] = {};
    seed[0] = tag;
    std::vector<std::uint8_t> bytes(n_bits / 8);
    randombytes_buf_deterministic(bytes.data(), bytes.size(), seed);
    return BitVector::from_bytes(bytes);
}

}  // namespace

// Worked examples published with the reference test descriptions.
TEST_CASE("reference examples") {
    CHECK(p_value("monobit-frequency", "1011010101") == doctest::Approx(0.527089).epsilon(1e-5));
    StatsParameters bf;
    bf.block_frequency_m = 3;
    CHECK(p_value("block-frequency", "0110011010", bf) == doctest::Approx(0.801252).epsilon(1e-5));
    CHECK(p_value("runs", "1001101011") == doctest::Approx(0.147232).epsilon(1e-5));
    CHECK(p_value("longest-run",
                  "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101"
                  "011111001100111001101101100010110010") == doctest::Approx(0.180609).epsilon(1e-4));
    const auto serial = serial_p_values(bits("0011011101"), 3);
    CHECK(serial.first == doctest::Approx(0.808792).epsilon(1e-5));
    CHECK(serial.second == doctest::Approx(0.670320).epsilon(1e-5));
    StatsParameters ap;
    ap.approximate_entropy_m = 3;
    CHECK(p_value("approximate-entropy", "0100110101", ap) == doctest::Approx(0.261961).epsilon(1e-5));
    CHECK(p_value("cumulative-sums", "1011010111") == doctest::Approx(0.4116588).epsilon(1e-5));
}

TEST_CASE("spectral test against a direct DFT") {
    std::mt19937_64 gen(8);
    for (std::size_t n : {10u, 1000u, 4096u}) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(gen() & 1 ? '1' : '0');
        const double threshold = std::sqrt(std::log(20.0) * n);
        double below = 0;
        for (std::size_t j = 0; j < n / 2; ++j) {
            std::complex<double> f = 0;
            for (std::size_t k = 0; k < n; ++k) {
                f += (s[k] == '1' ? 1.0 : -1.0) * std::polar(1.0, -2 * std::numbers::pi * double(j * k) / double(n));
            }
            below += std::abs(f) < threshold;
        }
        const double d = (below - 0.95 * n / 2) / std::sqrt(n * 0.95 * 0.05 / 4);
        CAPTURE(n);
        CHECK(p_value("spectral-dft", s) == doctest::Approx(std::erfc(std::fabs(d) / std::sqrt(2.0))).epsilon(1e-12));
    }
}

TEST_CASE("monobit") {
    std::string balanced(50, '1');
    balanced += std::string(50, '0');
    CHECK(p_value("monobit-frequency", balanced) == doctest::Approx(1.0));
    std::string s(58, '1');
    s += std::string(42, '0');
    CHECK(p_value("monobit-frequency", s) == doctest::Approx(std::erfc(1.6 / std::sqrt(2.0))).epsilon(1e-12));
    CHECK(p_value("monobit-frequency", s) == doctest::Approx(0.1096).epsilon(1e-3));
    CHECK(p_value("monobit-frequency", std::string(1000, '1')) < 1e-20);
}

TEST_CASE("argument checks") {
    const BitVector b(1000);
    CHECK_THROWS_AS(run_test("no-such-test", b, 1000), std::invalid_argument);
    CHECK_THROWS_AS(run_test("runs", b, 2000), std::invalid_argument);
    CHECK_THROWS_AS(run_suite(BitVector{}, 1000), PreconditionError);
    CHECK_THROWS_AS(run_suite(BitVector(1500), 1000), PreconditionError);
    CHECK(implemented_tests().size() == 9);
}

TEST_CASE("proportion interval") {
    const auto a = proportion_confidence(0.01, 5000);
    CHECK(std::round(a.lo * 1e4) / 1e4 == doctest::Approx(0.9858));
    CHECK(std::round(a.hi * 1e4) / 1e4 == doctest::Approx(0.9942));
    const auto b = proportion_confidence(0.01, 1000);
    CHECK(b.lo == doctest::Approx(0.98056).epsilon(1e-5));
    CHECK(b.hi == doctest::Approx(0.99944).epsilon(1e-5));
    const auto c = proportion_confidence(0.01, 1'000'000'000'000ull);
    CHECK(c.hi - c.lo < 1e-4);
    CHECK((c.lo + c.hi) / 2 == doctest::Approx(0.99));
}

TEST_CASE("known-good generator passes the suite") {
    REQUIRE(sodium_init() >= 0);
    const std::size_t block = kDefaultStatsBlock;
    const auto stream = chacha_stream(100 * block, 1);
    const auto reports = run_suite(stream, block);
    REQUIRE(reports.size() == implemented_tests().size());
    const auto interval = proportion_confidence(0.01, 100);
    for (const auto& r : reports) {
        CAPTURE(r.test_name);
        CHECK(r.p_values.size() == 100);
        CHECK(r.pass_proportion >= interval.lo);
        CHECK(r.passed);
        CHECK(r.mean_p > 0.3);
        CHECK(r.mean_p < 0.7);
    }
}

TEST_CASE("alternating pattern fails runs and serial") {
    const std::size_t block = 100'000;
    BitVector alt;
    for (std::size_t i = 0; i < 10 * block; ++i) alt.push_back(i & 1);
    const auto reports = run_suite(alt, block);
    for (const auto& r : reports) {
        if (r.test_name == "monobit-frequency") CHECK(r.pass_proportion == 1.0);
        if (r.test_name == "runs" || r.test_name == "serial") {
            CHECK(r.pass_proportion == 0.0);
            CHECK_FALSE(r.passed);
        }
    }
}
