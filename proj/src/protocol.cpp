// SPDX-License-Identifier: Apache-2.0
#include "qrng/protocol.hpp"

#include <cmath>
#include <stdexcept>

namespace qrng {

std::string_view to_string(BlockKind kind) {
    switch (kind) {
        case BlockKind::TestH: return "test_h";
        case BlockKind::TestV: return "test_v";
        case BlockKind::Generate: return "generate";
    }
    return "unknown";
}

int state_index(BlockKind kind) { return static_cast<int>(kind); }

void RoundStatistics::record(int state, const DetectionEvent& event) {
    if (const auto* bit = std::get_if<Bit>(&event)) {
        ++counts[bit->value][state];
    } else {
        const auto reason = std::get<Discard>(event).reason;
        ++discards[state][reason == DiscardReason::NoClick ? 0 : 1];
    }
}

double RoundStatistics::probability(int outcome, int state) const {
    const auto total = non_discarded(state);
    return total == 0 ? 0.0 : static_cast<double>(counts[outcome][state]) / static_cast<double>(total);
}

RoundStatistics& RoundStatistics::operator+=(const RoundStatistics& other) {
    for (int a = 0; a < 2; ++a) {
        for (int x = 0; x < 3; ++x) counts[a][x] += other.counts[a][x];
    }
    for (int x = 0; x < 3; ++x) {
        for (int r = 0; r < 2; ++r) discards[x][r] += other.discards[x][r];
    }
    return *this;
}

void ProtocolConfig::validate() const {
    if (!(bias >= 0.0 && bias <= 1.0)) throw std::invalid_argument("protocol: bias must lie in [0, 1]");
    if (test_rounds == 0) throw std::invalid_argument("protocol: test_rounds must be > 0");
    if (round_budget == 0) throw std::invalid_argument("protocol: round_budget must be > 0");
    if (!(switch_latency >= 0.0)) throw std::invalid_argument("protocol: switch_latency must be >= 0");
}

BlockKind choose_block_kind(Rng& rng, double bias) {
    const double u = rng.uniform();
    if (u < bias) return BlockKind::Generate;
    // remaining mass split evenly between the two test states
    return u < bias + 0.5 * (1.0 - bias) ? BlockKind::TestH : BlockKind::TestV;
}

BlockResult run_block(BlockKind kind, std::uint64_t block_id, double day, const SourceConfig& source,
                      const MeasurementBoxConfig& box, const ProtocolConfig& protocol, Rng& rng) {
    const int state = state_index(kind);
    const OutcomeSampler sampler(prepare_state(state), box, effective_mean(source, day));

    BlockResult result;
    result.block.block_id = block_id;
    result.block.kind = kind;
    result.block.produced_at = day;

    const bool generate = kind == BlockKind::Generate;
    const std::uint64_t budget = generate ? protocol.round_budget : protocol.test_rounds;
    if (generate) result.block.bits.reserve(kBlockBits);

    std::uint64_t rounds = 0;
    while (rounds < budget && result.block.bits.size() < kBlockBits) {
        const auto draw = sampler.next_fast(rng);
        if (draw.no_clicks >= budget - rounds) {
            // the budget runs out inside this silent stretch
            result.delta.record_no_clicks(state, budget - rounds);
            rounds = budget;
            break;
        }
        result.delta.record_no_clicks(state, draw.no_clicks);
        rounds += draw.no_clicks + 1;
        switch (draw.outcome) {
            case OutcomeSampler::Outcome::Bit0:
            case OutcomeSampler::Outcome::Bit1: {
                const bool one = draw.outcome == OutcomeSampler::Outcome::Bit1;
                ++result.delta.counts[one][state];
                result.block.bits.push_back(one);
                break;
            }
            case OutcomeSampler::Outcome::DoubleClick:
                ++result.delta.discards[state][1];
                break;
            case OutcomeSampler::Outcome::NoClick:
                ++result.delta.discards[state][0];
                break;
        }
    }
    result.rounds = rounds;
    return result;
}

SuccessEstimate estimate_success(const RoundStatistics& stats) {
    const auto nh = stats.non_discarded(0);
    const auto nv = stats.non_discarded(1);
    if (nh == 0 || nv == 0) {
        throw PreconditionError(
            "estimate_success: no test data (need at least one non-discarded round for both |H> and |V>)");
    }
    auto binomial = [](double p, std::uint64_t n) {
        return Estimate{p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
    };
    SuccessEstimate out;
    out.h = binomial(stats.probability(0, 0), nh);
    out.v = binomial(stats.probability(1, 1), nv);
    out.average = {0.5 * (out.h.value + out.v.value),
                   0.5 * std::sqrt(out.h.sigma * out.h.sigma + out.v.sigma * out.v.sigma)};
    return out;
}

BlockProducer::BlockProducer(SourceConfig source, MeasurementBoxConfig box, ProtocolConfig protocol,
                             std::uint64_t seed)
    : source_(std::move(source)),
      box_(box),
      protocol_(protocol),
      choice_rng_(mix_seed(seed, 0)),
      physics_rng_(mix_seed(seed, 1)) {
    source_.validate();
    box_.validate();
    protocol_.validate();
}

BlockResult BlockProducer::next(double day) {
    const BlockKind kind = choose_block_kind(choice_rng_, protocol_.bias);
    auto result = run_block(kind, next_id_++, day, source_, box_, protocol_, physics_rng_);

    if (has_previous_ && kind != previous_) {
        ++ledger_.mode_switches;
        ledger_.seconds += protocol_.switch_latency;
    }
    has_previous_ = true;
    previous_ = kind;
    ledger_.rounds += result.rounds;
    ledger_.seconds += static_cast<double>(result.rounds) * source_.window;
    if (kind == BlockKind::Generate) ledger_.generate_bits += result.block.bits.size();
    return result;
}

}  // namespace qrng
