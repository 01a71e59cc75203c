// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrng/certify.hpp"
#include "qrng/extract.hpp"
#include "qrng/optics.hpp"
#include "qrng/protocol.hpp"
#include "qrng/stats.hpp"
#include "qrng/transport.hpp"

namespace qrng {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Error raised by a pipeline stage; `stage` names the failing step.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct ExtractionConfig {
    std::size_t n = kDefaultExtractorInput;
    double epsilon_log2 = kDefaultEpsilonLog2;
};

struct StatsConfig {
    std::size_t block_size = kDefaultStatsBlock;
    double alpha = kDefaultAlpha;
};

struct TransportConfig {
    std::string endpoint;            // empty: blocks stay in process
    std::string storage = "server";  // relative to the output directory
    double drop_rate = 0.0;
    double corrupt_rate = 0.0;
};

struct TimelineConfig {
    double span_days = 0.0;  // > 0 spreads the blocks evenly over this many days
    double rate_bucket_hours = 6.0;
};

struct PipelineConfig {
    SourceConfig source;
    MeasurementBoxConfig box;
    ProtocolConfig protocol;  // holds the generation bias
    std::uint64_t blocks = 10000;
    ExtractionConfig extraction;
    StatsConfig stats;
    TransportConfig transport;
    TimelineConfig timeline;
    std::uint64_t seed = 1;

    /// Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RoundStatistics& stats);
RoundStatistics statistics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Certificate& certificate);
nlohmann::json to_json(const std::vector<TestReport>& reports);

struct RateBucket {
    double start_day = 0.0;
    double end_day = 0.0;
    std::uint64_t bits = 0;
    double seconds = 0.0;  // detection time, excluding waveplate switching

    double rate() const { return seconds > 0.0 ? bits / seconds : 0.0; }
};

struct SimulationResult {
    RoundStatistics statistics;
    BitVector raw;  // generation-state bits in stream order
    ThroughputLedger ledger;
    std::array<std::uint64_t, 3> blocks_per_kind{};  // by state label
    std::vector<RateBucket> rate_table;
};

/// Runs the block producer for config.blocks blocks. `sink`, when set,
/// receives every block in order (frame log, transport).
SimulationResult simulate(const PipelineConfig& config,
                          const std::function<void(const BitBlock&)>& sink = {});

struct CertificationResult {
    SuccessEstimate success;
    Certificate per_detector;  // certified with both test successes
    Certificate averaged;      // both inputs set to the averaged success, for display
};
CertificationResult certify_statistics(const RoundStatistics& statistics);

struct ExtractionResult {
    ExtractionParams params;
    BitVector bits;
};
ExtractionResult extract_stage(const BitVector& raw, const ExtractionConfig& config);

struct RunSummary {
    std::uint64_t blocks = 0;
    std::array<std::uint64_t, 3> blocks_per_kind{};
    std::uint64_t raw_bits = 0;
    std::uint64_t rounds = 0;
    double simulated_seconds = 0.0;
    double raw_rate = 0.0;      // generation bits per simulated second, switching included
    double discard_rate = 0.0;  // discarded windows / all windows
    double double_click_fraction = 0.0;  // double clicks / windows with any click
    std::optional<CertificationResult> certification;
    std::optional<ExtractionParams> extraction;
    std::uint64_t extracted_bits = 0;
    std::vector<TestReport> reports;
    std::vector<RateBucket> rate_table;
    std::optional<IngestStats> ingest;
};

nlohmann::json to_json(const RunSummary& summary);

/// simulate -> (optional UDP loop) -> certify -> extract -> test, writing
/// every artifact into `out_dir`. Stage failures surface as StageError.
RunSummary run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

/// Binary PGM (P5, maxval 255); each pixel is one MSB-first byte of `bits`, row-major.
std::vector<std::uint8_t> bits_to_image(const BitVector& bits, std::size_t width, std::size_t height);

/// summary.json and summary.txt in `out_dir`.
void emit_report(const RunSummary& summary, const std::filesystem::path& out_dir);
std::string format_summary_text(const RunSummary& summary);

struct BenchmarkResult {
    std::uint64_t raw_bits = 0;
    std::uint64_t extracted_bits = 0;
    double seconds = 0.0;
    double raw_mbit_per_s() const { return seconds > 0.0 ? raw_bits / seconds / 1e6 : 0.0; }
};

/// Wall-clock throughput of simulate -> pack -> extract on generation blocks.
BenchmarkResult benchmark_pipeline(const PipelineConfig& config, std::uint64_t raw_bits);

/// Contents of statistics.json: tallies, ledger, rate table and discard figures.
nlohmann::json simulation_snapshot(const SimulationResult& sim, const RoundStatistics& statistics);
/// extracted.bits plus the extracted.json sidecar.
void write_extraction(const ExtractionResult& extracted, const std::filesystem::path& out_dir);
void write_image(const std::filesystem::path& path, const std::vector<std::uint8_t>& pgm);
std::vector<TestReport> reports_from_json(const nlohmann::json& j);
/// Rebuilds a summary from the files the individual stages leave in `out_dir`.
RunSummary summary_from_artifacts(const std::filesystem::path& out_dir);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace qrng
