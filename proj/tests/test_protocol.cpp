#include <doctest.h>

#include <cmath>

#include "qrng/protocol.hpp"

using namespace qrng;

TEST_CASE("biased block choice") {
    Rng rng(4);
    SUBCASE("bias 1 always generates") {
        for (int i = 0; i < 10'000; ++i) CHECK(choose_block_kind(rng, 1.0) == BlockKind::Generate);
    }
    SUBCASE("bias 0.99") {
        std::array<int, 3> seen{};
        for (int i = 0; i < 100'000; ++i) ++seen[static_cast<int>(choose_block_kind(rng, 0.99))];
        CHECK(std::abs(seen[2] / 1e5 - 0.99) < 0.003);
        CHECK(std::abs(seen[0] / 1e5 - 0.005) < 0.0015);
        CHECK(std::abs(seen[1] / 1e5 - 0.005) < 0.0015);
    }
    SUBCASE("bias 0 never generates and splits tests evenly") {
        std::array<int, 3> seen{};
        for (int i = 0; i < 10'000; ++i) ++seen[static_cast<int>(choose_block_kind(rng, 0.0))];
        CHECK(seen[2] == 0);
        CHECK(std::abs(seen[0] - 5000) < 4 * 50);
    }
}

TEST_CASE("generation share stays above the bias bound") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const int k = 20'000;
        const double bias = 0.99;
        int generate = 0;
        for (int i = 0; i < k; ++i) generate += choose_block_kind(rng, bias) == BlockKind::Generate;
        CHECK(generate >= bias * k - 4 * std::sqrt(k * bias * (1 - bias)));
    }
}

TEST_CASE("block simulation") {
    Rng rng(8);
    const SourceConfig source;
    ProtocolConfig protocol;

    SUBCASE("ideal |H> test block") {
        protocol.test_rounds = 10'000;
        const auto r = run_block(BlockKind::TestH, 3, 0.0, source, MeasurementBoxConfig::ideal(), protocol, rng);
        CHECK(r.rounds == 10'000);
        CHECK(r.delta.non_discarded(0) > 0);
        CHECK(r.delta.counts[0][0] == r.delta.non_discarded(0));
        CHECK(r.delta.probability(0, 0) == 1.0);
        CHECK(r.delta.non_discarded(0) + r.delta.discarded(0) == 10'000);
        CHECK(r.block.block_id == 3);
        CHECK(r.block.kind == BlockKind::TestH);
    }
    SUBCASE("ideal generation block is unbiased and full") {
        const auto r = run_block(BlockKind::Generate, 0, 0.0, source, MeasurementBoxConfig::ideal(), protocol, rng);
        REQUIRE(r.block.bits.size() == kBlockBits);
        CHECK(std::abs(r.block.bits.popcount() / double(kBlockBits) - 0.5) < 0.01);
        CHECK(r.delta.non_discarded(2) == kBlockBits);
    }
    SUBCASE("default box |V> success") {
        protocol.test_rounds = 100'000;
        RoundStatistics total;
        for (int i = 0; i < 10; ++i) {
            total += run_block(BlockKind::TestV, i, 0.0, source, MeasurementBoxConfig{}, protocol, rng).delta;
        }
        CHECK(std::abs(total.probability(1, 1) - 0.97) < 0.01);
    }
    SUBCASE("round budget bounds a generation block") {
        protocol.round_budget = 1000;
        const auto r = run_block(BlockKind::Generate, 0, 0.0, source, MeasurementBoxConfig{}, protocol, rng);
        CHECK(r.rounds == 1000);
        CHECK(r.block.bits.size() < 1000);
        CHECK(r.delta.non_discarded(2) + r.delta.discarded(2) == 1000);
    }
}

TEST_CASE("statistics merge is associative and commutative") {
    Rng rng(12);
    const SourceConfig source;
    ProtocolConfig protocol;
    protocol.test_rounds = 5000;
    std::array<RoundStatistics, 3> parts;
    const std::array kinds{BlockKind::TestH, BlockKind::TestV, BlockKind::Generate};
    for (int i = 0; i < 3; ++i) {
        protocol.round_budget = 20'000;
        parts[i] = run_block(kinds[i], i, 0.0, source, MeasurementBoxConfig{}, protocol, rng).delta;
    }
    CHECK((parts[0] + parts[1]) + parts[2] == parts[0] + (parts[1] + parts[2]));
    CHECK(parts[0] + parts[1] == parts[1] + parts[0]);

    StatisticsAccumulator acc;
    for (const auto& p : parts) acc.merge(p);
    CHECK(acc.snapshot() == parts[0] + parts[1] + parts[2]);
}

TEST_CASE("success estimation") {
    RoundStatistics s;
    SUBCASE("perfect scores") {
        s.counts[0][0] = 100;
        s.counts[1][1] = 100;
        const auto e = estimate_success(s);
        CHECK(e.h.value == 1.0);
        CHECK(e.h.sigma == 0.0);
    }
    SUBCASE("binomial error") {
        s.counts[0][0] = 97;
        s.counts[1][0] = 3;
        s.counts[1][1] = 97;
        s.counts[0][1] = 3;
        const auto e = estimate_success(s);
        CHECK(e.h.value == doctest::Approx(0.97));
        CHECK(e.h.sigma == doctest::Approx(std::sqrt(0.97 * 0.03 / 100)));
        CHECK(e.h.sigma == doctest::Approx(0.017).epsilon(0.01));
        CHECK(e.average.value == doctest::Approx(0.97));
    }
    SUBCASE("no test data") {
        s.counts[0][2] = 10;
        CHECK_THROWS_AS(estimate_success(s), PreconditionError);
        s.counts[0][0] = 5;
        CHECK_THROWS_AS(estimate_success(s), PreconditionError);
    }
}

TEST_CASE("block producer") {
    ProtocolConfig protocol;
    protocol.bias = 0.5;
    protocol.test_rounds = 2000;
    BlockProducer a(SourceConfig{}, MeasurementBoxConfig{}, protocol, 99);
    BlockProducer b(SourceConfig{}, MeasurementBoxConfig{}, protocol, 99);
    std::uint64_t last_id = 0;
    for (int i = 0; i < 40; ++i) {
        const auto ra = a.next(0.0);
        const auto rb = b.next(0.0);
        REQUIRE(ra.block == rb.block);
        REQUIRE(ra.delta == rb.delta);
        if (i > 0) CHECK(ra.block.block_id == last_id + 1);
        last_id = ra.block.block_id;
        if (ra.block.kind != BlockKind::Generate) CHECK(ra.rounds == 2000);
    }
    CHECK(a.ledger().mode_switches > 0);
    const double detect = a.ledger().rounds * SourceConfig{}.window;
    CHECK(a.ledger().seconds == doctest::Approx(detect + a.ledger().mode_switches * protocol.switch_latency));
}
