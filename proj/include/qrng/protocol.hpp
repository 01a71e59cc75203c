// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <string_view>

#include "qrng/bits.hpp"
#include "qrng/optics.hpp"
#include "qrng/random.hpp"

namespace qrng {

/// Numeric values double as the transport state label.
enum class BlockKind : std::uint8_t { TestH = 0, TestV = 1, Generate = 2 };

std::string_view to_string(BlockKind kind);
/// Index of the prepared state for a block kind (TestH -> 0, TestV -> 1, Generate -> 2).
int state_index(BlockKind kind);

inline constexpr std::size_t kBlockBits = 65536;

struct BitBlock {
    std::uint64_t block_id = 0;
    BlockKind kind = BlockKind::Generate;
    /// Outcomes of non-discarded rounds, at most kBlockBits. Only Generate
    /// blocks feed the raw randomness stream.
    BitVector bits;
    double produced_at = 0.0;  // elapsed days

    friend bool operator==(const BitBlock&, const BitBlock&) = default;
};

/// Outcome tallies per prepared state. Merging is associative and commutative.
struct RoundStatistics {
    std::array<std::array<std::uint64_t, 3>, 2> counts{};    // [outcome a][state x]
    std::array<std::array<std::uint64_t, 2>, 3> discards{};  // [state x][NoClick, DoubleClick]

    void record(int state, const DetectionEvent& event);
    void record_no_clicks(int state, std::uint64_t n) { discards[state][0] += n; }

    std::uint64_t non_discarded(int state) const { return counts[0][state] + counts[1][state]; }
    std::uint64_t discarded(int state) const { return discards[state][0] + discards[state][1]; }
    /// Empirical p(a|omega_x) over non-discarded rounds; 0 when there are none.
    double probability(int outcome, int state) const;

    RoundStatistics& operator+=(const RoundStatistics& other);
    friend RoundStatistics operator+(RoundStatistics a, const RoundStatistics& b) { return a += b; }
    friend bool operator==(const RoundStatistics&, const RoundStatistics&) = default;
};

/// Thread-safe sink for statistics deltas from parallel block workers.
class StatisticsAccumulator {
  public:
    void merge(const RoundStatistics& delta) {
        std::lock_guard lock(mutex_);
        total_ += delta;
    }
    RoundStatistics snapshot() const {
        std::lock_guard lock(mutex_);
        return total_;
    }

  private:
    mutable std::mutex mutex_;
    RoundStatistics total_;
};

struct ProtocolConfig {
    double bias = 0.99;                       // probability of a Generate block
    std::uint64_t test_rounds = 65536;        // windows per test block
    std::uint64_t round_budget = 1ull << 36;  // window cap for a Generate block
    double switch_latency = 0.05;             // s, waveplate reconfiguration

    void validate() const;
};

BlockKind choose_block_kind(Rng& rng, double bias);

struct BlockResult {
    BitBlock block;
    RoundStatistics delta;
    std::uint64_t rounds = 0;  // detection windows consumed
};

BlockResult run_block(BlockKind kind, std::uint64_t block_id, double day, const SourceConfig& source,
                      const MeasurementBoxConfig& box, const ProtocolConfig& protocol, Rng& rng);

struct Estimate {
    double value = 0.0;
    double sigma = 0.0;
};

struct SuccessEstimate {
    Estimate h;
    Estimate v;
    Estimate average;
};

/// Thrown when an operation's data precondition does not hold.
class PreconditionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// p_suc_h = p(0|H), p_suc_v = p(1|V), with binomial standard errors.
SuccessEstimate estimate_success(const RoundStatistics& stats);

/// Simulated-time bookkeeping for a block stream.
struct ThroughputLedger {
    std::uint64_t generate_bits = 0;
    std::uint64_t rounds = 0;
    std::uint64_t mode_switches = 0;
    double seconds = 0.0;

    double raw_bit_rate() const { return seconds > 0.0 ? generate_bits / seconds : 0.0; }
};

/// Produces the block stream of one run: biased kind choice, simulation,
/// strictly increasing ids and simulated-time accounting.
class BlockProducer {
  public:
    BlockProducer(SourceConfig source, MeasurementBoxConfig box, ProtocolConfig protocol,
                  std::uint64_t seed);

    /// Next block, prepared at elapsed time `day`.
    BlockResult next(double day);

    std::uint64_t next_id() const { return next_id_; }
    const ThroughputLedger& ledger() const { return ledger_; }
    const SourceConfig& source() const { return source_; }

  private:
    SourceConfig source_;
    MeasurementBoxConfig box_;
    ProtocolConfig protocol_;
    Rng choice_rng_;
    Rng physics_rng_;
    std::uint64_t next_id_ = 0;
    bool has_previous_ = false;
    BlockKind previous_ = BlockKind::Generate;
    ThroughputLedger ledger_;
};

}  // namespace qrng
