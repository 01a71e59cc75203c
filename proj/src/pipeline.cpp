// SPDX-License-Identifier: Apache-2.0
#include "qrng/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace qrng {

using nlohmann::json;

namespace {

constexpr std::size_t kImageSide = 250;

// Copies known keys from `j` into the setters; any other key is a ConfigError.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
    }

    template <class T>
    ObjectReader& field(const char* key, T& target) {
        known_.push_back(key);
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                target = it->get<T>();
            } catch (const json::exception& e) {
                throw ConfigError(where_ + "." + key + ": " + e.what());
            }
        }
        return *this;
    }

    template <class F>
    ObjectReader& nested(const char* key, F&& parse) {
        known_.push_back(key);
        if (auto it = j_.find(key); it != j_.end()) parse(*it, where_ + "." + key);
        return *this;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
                throw ConfigError(where_ + ": unknown key '" + key + "'");
            }
        }
    }

  private:
    const json& j_;
    std::string where_;
    std::vector<std::string> known_;
};

json to_json(const SourceConfig& s) {
    json curve = json::array();
    for (const auto& p : s.degradation_curve) curve.push_back({p.day, p.multiplier});
    return {{"mean_photon_number", s.mean_photon_number},
            {"center_wavelength", s.center_wavelength},
            {"fwhm", s.fwhm},
            {"nominal_flux", s.nominal_flux},
            {"degradation_curve", curve},
            {"window", s.window}};
}

json to_json(const MeasurementBoxConfig& b) {
    return {{"detector_efficiency", b.detector_efficiency},
            {"dark_count_prob", b.dark_count_prob},
            {"pbs_transmission_h", b.pbs_transmission_h},
            {"pbs_transmission_v", b.pbs_transmission_v}};
}

json to_json(const Estimate& e) { return {{"value", e.value}, {"sigma", e.sigma}}; }

json to_json(const ExtractionParams& p) {
    return {{"n", p.n}, {"m", p.m}, {"epsilon_log2", p.epsilon_log2}, {"h8", p.h8}};
}

json to_json(const ThroughputLedger& l) {
    return {{"generate_bits", l.generate_bits},
            {"rounds", l.rounds},
            {"mode_switches", l.mode_switches},
            {"seconds", l.seconds},
            {"raw_bit_rate", l.raw_bit_rate()}};
}

json to_json(const std::vector<RateBucket>& table) {
    json rows = json::array();
    for (const auto& b : table) {
        rows.push_back({{"start_day", b.start_day},
                        {"end_day", b.end_day},
                        {"bits", b.bits},
                        {"seconds", b.seconds},
                        {"rate", b.rate()}});
    }
    return rows;
}

json to_json(const IngestStats& s) {
    return {{"received", s.received},
            {"valid", s.valid},
            {"invalid", s.invalid},
            {"duplicates", s.duplicates},
            {"frames_per_state", s.frames_per_state},
            {"bits_per_state", s.bits_per_state}};
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Outcome counts recovered from the server's per-state test logs.
RoundStatistics statistics_from_test_logs(const std::filesystem::path& dir) {
    RoundStatistics stats;
    const std::pair<const char*, int> logs[] = {{Collector::kTestHFile, 0}, {Collector::kTestVFile, 1}};
    for (const auto& [name, state] : logs) {
        std::ifstream in(dir / name);
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream fields(line);
            std::uint64_t id = 0;
            std::size_t bit_len = 0;
            std::string hex;
            fields >> id >> bit_len >> hex;
            std::vector<std::uint8_t> bytes;
            for (std::size_t k = 0; k + 1 < hex.size(); k += 2) {
                bytes.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(k, 2), nullptr, 16)));
            }
            const auto bits = BitVector::from_bytes(bytes, bit_len);
            const auto ones = bits.popcount();
            stats.counts[1][state] += ones;
            stats.counts[0][state] += bits.size() - ones;
        }
    }
    return stats;
}

}  // namespace

void PipelineConfig::validate() const {
    try {
        source.validate();
        box.validate();
        protocol.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (blocks == 0) throw ConfigError("blocks must be > 0");
    if (extraction.n == 0 || extraction.n % 8 != 0) throw ConfigError("extraction.n must be a positive multiple of 8");
    if (!(extraction.epsilon_log2 <= 0.0)) throw ConfigError("extraction.epsilon_log2 must be <= 0");
    if (stats.block_size == 0) throw ConfigError("stats.block_size must be > 0");
    if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) throw ConfigError("stats.alpha must lie in (0, 1)");
    if (!(transport.drop_rate >= 0.0 && transport.drop_rate <= 1.0) ||
        !(transport.corrupt_rate >= 0.0 && transport.corrupt_rate <= 1.0)) {
        throw ConfigError("transport fault rates must lie in [0, 1]");
    }
    if (!transport.endpoint.empty()) {
        try {
            Endpoint::parse(transport.endpoint);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (!(timeline.span_days >= 0.0)) throw ConfigError("timeline.span_days must be >= 0");
    if (!(timeline.rate_bucket_hours > 0.0)) throw ConfigError("timeline.rate_bucket_hours must be > 0");
}

json to_json(const PipelineConfig& c) {
    return {{"source", to_json(c.source)},
            {"box", to_json(c.box)},
            {"bias", c.protocol.bias},
            {"protocol",
             {{"test_rounds", c.protocol.test_rounds},
              {"round_budget", c.protocol.round_budget},
              {"switch_latency", c.protocol.switch_latency}}},
            {"blocks", c.blocks},
            {"extraction", {{"n", c.extraction.n}, {"epsilon_log2", c.extraction.epsilon_log2}}},
            {"stats", {{"block_size", c.stats.block_size}, {"alpha", c.stats.alpha}}},
            {"transport",
             {{"endpoint", c.transport.endpoint},
              {"storage", c.transport.storage},
              {"drop_rate", c.transport.drop_rate},
              {"corrupt_rate", c.transport.corrupt_rate}}},
            {"timeline", {{"span_days", c.timeline.span_days}, {"rate_bucket_hours", c.timeline.rate_bucket_hours}}},
            {"seed", c.seed}};
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    ObjectReader(j, "config")
        .nested("source",
                [&](const json& s, const std::string& where) {
                    ObjectReader(s, where)
                        .field("mean_photon_number", c.source.mean_photon_number)
                        .field("center_wavelength", c.source.center_wavelength)
                        .field("fwhm", c.source.fwhm)
                        .field("nominal_flux", c.source.nominal_flux)
                        .field("window", c.source.window)
                        .nested("degradation_curve",
                                [&](const json& curve, const std::string& w) {
                                    if (!curve.is_array()) throw ConfigError(w + " must be an array of [day, multiplier]");
                                    c.source.degradation_curve.clear();
                                    for (const auto& p : curve) {
                                        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                                            throw ConfigError(w + " entries must be [day, multiplier]");
                                        }
                                        c.source.degradation_curve.push_back({p[0].get<double>(), p[1].get<double>()});
                                    }
                                })
                        .finish();
                })
        .nested("box",
                [&](const json& b, const std::string& where) {
                    ObjectReader(b, where)
                        .field("detector_efficiency", c.box.detector_efficiency)
                        .field("dark_count_prob", c.box.dark_count_prob)
                        .field("pbs_transmission_h", c.box.pbs_transmission_h)
                        .field("pbs_transmission_v", c.box.pbs_transmission_v)
                        .finish();
                })
        .field("bias", c.protocol.bias)
        .nested("protocol",
                [&](const json& p, const std::string& where) {
                    ObjectReader(p, where)
                        .field("test_rounds", c.protocol.test_rounds)
                        .field("round_budget", c.protocol.round_budget)
                        .field("switch_latency", c.protocol.switch_latency)
                        .finish();
                })
        .field("blocks", c.blocks)
        .nested("extraction",
                [&](const json& e, const std::string& where) {
                    ObjectReader(e, where).field("n", c.extraction.n).field("epsilon_log2", c.extraction.epsilon_log2).finish();
                })
        .nested("stats",
                [&](const json& s, const std::string& where) {
                    ObjectReader(s, where).field("block_size", c.stats.block_size).field("alpha", c.stats.alpha).finish();
                })
        .nested("transport",
                [&](const json& t, const std::string& where) {
                    ObjectReader(t, where)
                        .field("endpoint", c.transport.endpoint)
                        .field("storage", c.transport.storage)
                        .field("drop_rate", c.transport.drop_rate)
                        .field("corrupt_rate", c.transport.corrupt_rate)
                        .finish();
                })
        .nested("timeline",
                [&](const json& t, const std::string& where) {
                    ObjectReader(t, where)
                        .field("span_days", c.timeline.span_days)
                        .field("rate_bucket_hours", c.timeline.rate_bucket_hours)
                        .finish();
                })
        .field("seed", c.seed)
        .finish();
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json to_json(const RoundStatistics& s) {
    json probabilities = json::object();
    const char* names[] = {"H", "V", "R"};
    for (int x = 0; x < 3; ++x) {
        if (s.non_discarded(x) == 0) continue;
        probabilities[names[x]] = {s.probability(0, x), s.probability(1, x)};
    }
    return {{"counts", s.counts}, {"discards", s.discards}, {"p_a_given_x", probabilities}};
}

RoundStatistics statistics_from_json(const json& j) {
    RoundStatistics s;
    try {
        s.counts = j.at("counts").get<decltype(s.counts)>();
        s.discards = j.at("discards").get<decltype(s.discards)>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("statistics snapshot: ") + e.what());
    }
    return s;
}

json to_json(const Certificate& c) {
    return {{"p_suc_h", c.p_suc_h},
            {"p_suc_v", c.p_suc_v},
            {"p_g", c.guessing_probability},
            {"h_min", c.min_entropy_per_bit},
            {"method", std::string(to_string(c.method))},
            {"tolerances",
             {{"p_g_convergence", kGuessingTolerance},
              {"h_min_floor_granularity", kMinEntropyGranularity},
              {"finite_size_correction", "none"}}}};
}

json to_json(const std::vector<TestReport>& reports) {
    json out = json::array();
    for (const auto& r : reports) {
        out.push_back({{"name", r.test_name},
                       {"mean_p", r.mean_p},
                       {"std_p", r.std_p},
                       {"proportion", r.pass_proportion},
                       {"interval", {r.interval.lo, r.interval.hi}},
                       {"verdict", r.passed ? "pass" : "fail"},
                       {"p_values", r.p_values}});
    }
    return out;
}

SimulationResult simulate(const PipelineConfig& config, const std::function<void(const BitBlock&)>& sink) {
    config.validate();
    BlockProducer producer(config.source, config.box, config.protocol, config.seed);
    SimulationResult out;
    out.raw.reserve(config.blocks * kBlockBits);
    const double bucket_days = config.timeline.rate_bucket_hours / 24.0;
    std::map<std::int64_t, RateBucket> buckets;

    for (std::uint64_t i = 0; i < config.blocks; ++i) {
        const double day = config.timeline.span_days > 0.0
                               ? config.timeline.span_days * static_cast<double>(i) / static_cast<double>(config.blocks)
                               : producer.ledger().seconds / 86400.0;
        auto result = producer.next(day);
        out.statistics += result.delta;
        const auto label = static_cast<std::size_t>(result.block.kind);
        ++out.blocks_per_kind[label];

        auto& bucket = buckets[static_cast<std::int64_t>(std::floor(day / bucket_days))];
        bucket.seconds += static_cast<double>(result.rounds) * config.source.window;
        if (result.block.kind == BlockKind::Generate) {
            bucket.bits += result.block.bits.size();
            out.raw.append(result.block.bits);
        }
        if (sink) sink(result.block);
    }
    out.ledger = producer.ledger();
    for (auto& [index, bucket] : buckets) {
        bucket.start_day = static_cast<double>(index) * bucket_days;
        bucket.end_day = bucket.start_day + bucket_days;
        out.rate_table.push_back(bucket);
    }
    return out;
}

CertificationResult certify_statistics(const RoundStatistics& statistics) {
    CertificationResult r;
    r.success = estimate_success(statistics);
    r.per_detector = certify(r.success.h.value, r.success.v.value);
    r.averaged = certify(r.success.average.value, r.success.average.value);
    return r;
}

ExtractionResult extract_stage(const BitVector& raw, const ExtractionConfig& config) {
    ExtractionResult r;
    r.params = ExtractionParams::from_entropy(estimate_min_entropy_8(raw), config.n, config.epsilon_log2);
    r.bits = extract(raw, r.params);
    return r;
}

json to_json(const RunSummary& s) {
    json j = {{"blocks", s.blocks},
              {"blocks_per_kind",
               {{"test_h", s.blocks_per_kind[0]}, {"test_v", s.blocks_per_kind[1]}, {"generate", s.blocks_per_kind[2]}}},
              {"raw_bits", s.raw_bits},
              {"rounds", s.rounds},
              {"simulated_seconds", s.simulated_seconds},
              {"raw_rate", s.raw_rate},
              {"discard_rate", s.discard_rate},
              {"double_click_fraction", s.double_click_fraction},
              {"extracted_bits", s.extracted_bits},
              {"rate_table", to_json(s.rate_table)},
              {"tests", to_json(s.reports)}};
    if (s.certification) {
        const auto& c = *s.certification;
        j["p_suc"] = {{"h", to_json(c.success.h)}, {"v", to_json(c.success.v)}, {"average", to_json(c.success.average)}};
        j["certificate"] = to_json(c.per_detector);
        j["certificate_averaged"] = to_json(c.averaged);
        j["h_min"] = c.per_detector.min_entropy_per_bit;
    }
    if (s.extraction) j["extraction"] = to_json(*s.extraction);
    if (s.ingest) j["ingest"] = to_json(*s.ingest);
    for (auto& t : j["tests"]) t.erase("p_values");
    return j;
}

std::vector<std::uint8_t> bits_to_image(const BitVector& bits, std::size_t width, std::size_t height) {
    const std::size_t pixels = width * height;
    if (width == 0 || height == 0) throw std::invalid_argument("bits_to_image: dimensions must be positive");
    if (bits.size() < 8 * pixels) {
        throw PreconditionError("bits_to_image: need " + std::to_string(8 * pixels) + " bits, got " +
                                std::to_string(bits.size()));
    }
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const auto bytes = bits.slice(0, 8 * pixels).to_bytes();
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
}

std::string format_summary_text(const RunSummary& s) {
    std::ostringstream o;
    o << "QRNG run summary\n";
    o << "  blocks            " << s.blocks << " (generate " << s.blocks_per_kind[2] << ", test H "
      << s.blocks_per_kind[0] << ", test V " << s.blocks_per_kind[1] << ")\n";
    o << "  raw bits          " << s.raw_bits << "\n";
    o << "  simulated time    " << fixed(s.simulated_seconds, 3) << " s\n";
    o << "  raw rate          " << fixed(s.raw_rate / 1e6, 3) << " Mbit/s\n";
    o << "  discard rate      " << fixed(s.discard_rate, 6) << "\n";
    o << "  double clicks     " << fixed(s.double_click_fraction, 6) << " of clicked windows\n";
    if (s.certification) {
        const auto& c = *s.certification;
        o << "  P_suc(H)          " << fixed(c.success.h.value, 4) << " +- " << fixed(c.success.h.sigma, 4) << "\n";
        o << "  P_suc(V)          " << fixed(c.success.v.value, 4) << " +- " << fixed(c.success.v.sigma, 4) << "\n";
        o << "  P_suc(avg)        " << fixed(c.success.average.value, 4) << " +- "
          << fixed(c.success.average.sigma, 4) << "\n";
        o << "  P_g / H_min       " << fixed(c.per_detector.guessing_probability, 6) << " / "
          << fixed(c.per_detector.min_entropy_per_bit, 4) << " bits per round (per-detector)\n";
        o << "  P_g / H_min       " << fixed(c.averaged.guessing_probability, 6) << " / "
          << fixed(c.averaged.min_entropy_per_bit, 4) << " bits per round (averaged P_suc)\n";
    }
    if (s.extraction) {
        o << "  extraction        n=" << s.extraction->n << " m=" << s.extraction->m << " h8="
          << fixed(s.extraction->h8, 4) << " -> " << s.extracted_bits << " bits\n";
    }
    if (s.ingest) {
        o << "  transport         " << s.ingest->valid << " valid, " << s.ingest->invalid << " invalid, "
          << s.ingest->duplicates << " duplicate frames\n";
    }

    o << "\nRaw rate vs elapsed time\n";
    o << "  start_day   end_day     Mbit/s\n";
    for (const auto& b : s.rate_table) {
        char line[96];
        std::snprintf(line, sizeof line, "  %9.3f %9.3f %10.4f\n", b.start_day, b.end_day, b.rate() / 1e6);
        o << line;
    }

    o << "\nStatistical tests\n";
    if (s.reports.empty()) {
        o << "  no statistical tests run\n";
    } else {
        const auto& iv = s.reports.front().interval;
        o << "  blocks " << s.reports.front().p_values.size() << ", pass interval [" << fixed(iv.lo, 4) << ", "
          << fixed(iv.hi, 4) << "]\n";
        o << "  test                  mean_p   std_p  proportion verdict\n";
        for (const auto& r : s.reports) {
            char line[128];
            std::snprintf(line, sizeof line, "  %-20s %7.4f %7.4f %10.4f  %s\n", r.test_name.c_str(), r.mean_p,
                          r.std_p, r.pass_proportion, r.passed ? "pass" : "FAIL");
            o << line;
        }
    }
    return o.str();
}

void write_image(const std::filesystem::path& path, const std::vector<std::uint8_t>& pgm) {
    std::ofstream img(path, std::ios::binary | std::ios::trunc);
    img.write(reinterpret_cast<const char*>(pgm.data()), static_cast<std::streamsize>(pgm.size()));
    if (!img) throw std::runtime_error("cannot write " + path.string());
}

json simulation_snapshot(const SimulationResult& sim, const RoundStatistics& statistics) {
    json j = to_json(statistics);
    j["ledger"] = to_json(sim.ledger);
    j["rate_table"] = to_json(sim.rate_table);
    j["blocks_per_kind"] = sim.blocks_per_kind;
    std::uint64_t discarded = 0;
    std::uint64_t clicked = 0;
    std::uint64_t doubles = 0;
    for (int x = 0; x < 3; ++x) {
        discarded += sim.statistics.discarded(x);
        doubles += sim.statistics.discards[x][1];
        clicked += sim.statistics.non_discarded(x) + sim.statistics.discards[x][1];
    }
    j["discard_rate"] = sim.ledger.rounds ? static_cast<double>(discarded) / static_cast<double>(sim.ledger.rounds) : 0.0;
    j["double_click_fraction"] = clicked ? static_cast<double>(doubles) / static_cast<double>(clicked) : 0.0;
    return j;
}

void write_extraction(const ExtractionResult& extracted, const std::filesystem::path& out_dir) {
    write_bit_file(out_dir / "extracted.bits", extracted.bits);
    json sidecar = to_json(extracted.params);
    sidecar["seed_offset"] = 0;
    sidecar["bits"] = extracted.bits.size();
    write_json(out_dir / "extracted.json", sidecar);
}

std::vector<TestReport> reports_from_json(const json& j) {
    std::vector<TestReport> out;
    try {
        for (const auto& t : j) {
            TestReport r;
            r.test_name = t.at("name").get<std::string>();
            r.mean_p = t.at("mean_p").get<double>();
            r.std_p = t.at("std_p").get<double>();
            r.pass_proportion = t.at("proportion").get<double>();
            r.interval = {t.at("interval").at(0).get<double>(), t.at("interval").at(1).get<double>()};
            r.passed = t.at("verdict").get<std::string>() == "pass";
            if (t.contains("p_values")) r.p_values = t.at("p_values").get<std::vector<double>>();
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("test report: ") + e.what());
    }
    return out;
}

RunSummary summary_from_artifacts(const std::filesystem::path& out_dir) {
    RunSummary s;
    const auto stats = read_json(out_dir / "statistics.json");
    const auto statistics = statistics_from_json(stats);
    try {
        const auto& l = stats.at("ledger");
        s.raw_bits = l.at("generate_bits").get<std::uint64_t>();
        s.rounds = l.at("rounds").get<std::uint64_t>();
        s.simulated_seconds = l.at("seconds").get<double>();
        s.raw_rate = l.at("raw_bit_rate").get<double>();
        s.blocks_per_kind = stats.at("blocks_per_kind").get<std::array<std::uint64_t, 3>>();
        s.blocks = s.blocks_per_kind[0] + s.blocks_per_kind[1] + s.blocks_per_kind[2];
        s.discard_rate = stats.at("discard_rate").get<double>();
        s.double_click_fraction = stats.at("double_click_fraction").get<double>();
        for (const auto& b : stats.at("rate_table")) {
            s.rate_table.push_back({b.at("start_day").get<double>(), b.at("end_day").get<double>(),
                                    b.at("bits").get<std::uint64_t>(), b.at("seconds").get<double>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("statistics snapshot: ") + e.what());
    }
    try {
        s.certification = certify_statistics(statistics);
    } catch (const PreconditionError&) {
        // no test rounds: the summary is emitted without a certificate
    }
    if (std::filesystem::exists(out_dir / "extracted.json")) {
        const auto e = read_json(out_dir / "extracted.json");
        ExtractionParams p;
        p.n = e.at("n").get<std::size_t>();
        p.m = e.at("m").get<std::size_t>();
        p.epsilon_log2 = e.at("epsilon_log2").get<double>();
        p.h8 = e.at("h8").get<double>();
        s.extraction = p;
        s.extracted_bits = e.value("bits", std::uint64_t{0});
    }
    if (std::filesystem::exists(out_dir / "report.json")) s.reports = reports_from_json(read_json(out_dir / "report.json"));
    return s;
}

void emit_report(const RunSummary& summary, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    json j = to_json(summary);
    if (summary.reports.empty()) j["note"] = "no statistical tests run";
    write_json(out_dir / "summary.json", j);
    std::ofstream txt(out_dir / "summary.txt");
    txt << format_summary_text(summary);
    if (!txt) throw std::runtime_error("cannot write " + (out_dir / "summary.txt").string());
}

RunSummary run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    RunSummary summary;

    SimulationResult sim;
    std::optional<IngestStats> ingest;
    BitVector raw;
    RoundStatistics statistics;
    try {
        if (config.transport.endpoint.empty()) {
            sim = simulate(config);
            raw = std::move(sim.raw);
            statistics = sim.statistics;
        } else {
            std::vector<BitBlock> blocks;
            sim = simulate(config, [&](const BitBlock& b) { blocks.push_back(b); });
            const auto storage = out_dir / config.transport.storage;
            std::filesystem::remove_all(storage);
            UdpServer server(Endpoint::parse(config.transport.endpoint));
            Collector collector(storage);
            ServeOptions serve;
            serve.max_datagrams = blocks.size();
            std::thread receiver([&] { ingest = server.run(collector, serve); });
            StreamOptions stream;
            stream.faults = FaultPlan::random(blocks.size(), config.transport.drop_rate,
                                              config.transport.corrupt_rate, mix_seed(config.seed, 7));
            try {
                stream_device(blocks, Endpoint{"127.0.0.1", server.port()}, stream);
            } catch (...) {
                receiver.join();
                throw;
            }
            receiver.join();
            collector.write_status(blocks.empty() ? std::nullopt : std::optional(blocks.back().block_id));
            raw = read_bit_file(storage / Collector::kGenerateFile, ingest->bits_per_state[2]);
            statistics = statistics_from_test_logs(storage);
            for (int x = 0; x < 3; ++x) statistics.discards[x] = sim.statistics.discards[x];
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(config.transport.endpoint.empty() ? "simulate" : "transport", e.what());
    }

    summary.blocks = config.blocks;
    summary.blocks_per_kind = sim.blocks_per_kind;
    summary.raw_bits = raw.size();
    summary.rounds = sim.ledger.rounds;
    summary.simulated_seconds = sim.ledger.seconds;
    summary.raw_rate = sim.ledger.raw_bit_rate();
    summary.rate_table = sim.rate_table;
    summary.ingest = ingest;
    std::uint64_t discarded = 0;
    std::uint64_t clicked = 0;
    std::uint64_t doubles = 0;
    for (int x = 0; x < 3; ++x) {
        discarded += sim.statistics.discarded(x);
        doubles += sim.statistics.discards[x][1];
        clicked += sim.statistics.non_discarded(x) + sim.statistics.discards[x][1];
    }
    summary.discard_rate = summary.rounds ? static_cast<double>(discarded) / static_cast<double>(summary.rounds) : 0.0;
    summary.double_click_fraction = clicked ? static_cast<double>(doubles) / static_cast<double>(clicked) : 0.0;

    write_json(out_dir / "statistics.json", simulation_snapshot(sim, statistics));
    write_bit_file(out_dir / "raw_generate.bits", raw);
    write_json(out_dir / "raw.json", {{"bits", raw.size()}});

    try {
        summary.certification = certify_statistics(statistics);
    } catch (const std::exception& e) {
        throw StageError("certify", e.what());
    }
    json cert = to_json(summary.certification->per_detector);
    cert["averaged"] = to_json(summary.certification->averaged);
    write_json(out_dir / "certificate.json", cert);

    ExtractionResult extracted;
    try {
        extracted = extract_stage(raw, config.extraction);
    } catch (const std::exception& e) {
        throw StageError("extract", e.what());
    }
    summary.extraction = extracted.params;
    summary.extracted_bits = extracted.bits.size();
    write_extraction(extracted, out_dir);

    if (extracted.bits.size() / config.stats.block_size >= 2) {
        try {
            summary.reports = run_suite(extracted.bits, config.stats.block_size, config.stats.alpha);
        } catch (const std::exception& e) {
            throw StageError("test", e.what());
        }
    }
    write_json(out_dir / "report.json", to_json(summary.reports));

    if (extracted.bits.size() >= 8 * kImageSide * kImageSide) {
        write_image(out_dir / "image.pgm", bits_to_image(extracted.bits, kImageSide, kImageSide));
    }

    try {
        emit_report(summary, out_dir);
    } catch (const std::exception& e) {
        throw StageError("report", e.what());
    }
    return summary;
}

BenchmarkResult benchmark_pipeline(const PipelineConfig& config, std::uint64_t raw_bits) {
    PipelineConfig cfg = config;
    cfg.protocol.bias = 1.0;
    BlockProducer producer(cfg.source, cfg.box, cfg.protocol, cfg.seed);
    BenchmarkResult r;
    const auto start = std::chrono::steady_clock::now();
    BitVector raw;
    raw.reserve(raw_bits + kBlockBits);
    while (raw.size() < raw_bits) raw.append(producer.next(0.0).block.bits);
    const auto extracted = extract_stage(raw, cfg.extraction);
    const auto stop = std::chrono::steady_clock::now();
    r.raw_bits = raw.size();
    r.extracted_bits = extracted.bits.size();
    r.seconds = std::chrono::duration<double>(stop - start).count();
    return r;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

}  // namespace qrng
