// SPDX-License-Identifier: Apache-2.0
// Command-line front end: full runs and the individual pipeline stages.
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qrng/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitConfig = 2;

std::atomic<bool> g_stop{false};

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> blocks;
    std::string out_dir = "qrng-out";
    std::string endpoint;
};

qrng::PipelineConfig resolve_config(const CommonOptions& o) {
    qrng::PipelineConfig c = o.config.empty() ? qrng::PipelineConfig{} : qrng::load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.blocks) c.blocks = *o.blocks;
    if (!o.endpoint.empty()) c.transport.endpoint = o.endpoint;
    c.validate();
    return c;
}

std::optional<std::size_t> bit_count_from(const fs::path& sidecar, const char* key) {
    if (!fs::exists(sidecar)) return std::nullopt;
    const auto j = qrng::read_json(sidecar);
    if (!j.contains(key)) return std::nullopt;
    return j.at(key).get<std::size_t>();
}

int cmd_run(const CommonOptions& o) {
    const auto config = resolve_config(o);
    const auto summary = qrng::run_pipeline(config, o.out_dir);
    std::cout << qrng::format_summary_text(summary);
    return kExitOk;
}

int cmd_simulate(const CommonOptions& o) {
    const auto config = resolve_config(o);
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    fs::remove(out / "frames.log");
    qrng::FrameLogWriter log(out / "frames.log");
    auto sim = qrng::simulate(config, [&](const qrng::BitBlock& b) { log.append(b); });
    qrng::write_bit_file(out / "raw_generate.bits", sim.raw);
    qrng::write_json(out / "raw.json", {{"bits", sim.raw.size()}});
    qrng::write_json(out / "statistics.json", qrng::simulation_snapshot(sim, sim.statistics));
    std::cout << "simulated " << config.blocks << " blocks, " << sim.raw.size() << " raw bits, "
              << sim.ledger.raw_bit_rate() / 1e6 << " Mbit/s simulated\n";
    return kExitOk;
}

int cmd_certify(const CommonOptions& o, const std::string& stats_path, std::optional<double> p_h,
                std::optional<double> p_v, bool oracle) {
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    json cert;
    if (p_h || p_v) {
        if (!p_h || !p_v) throw qrng::ConfigError("--p-h and --p-v must be given together");
        const auto method = oracle ? qrng::CertificationMethod::Oracle : qrng::CertificationMethod::NumericProgram;
        cert = qrng::to_json(qrng::certify(*p_h, *p_v, method));
    } else {
        const fs::path path = stats_path.empty() ? out / "statistics.json" : fs::path(stats_path);
        const auto result = qrng::certify_statistics(qrng::statistics_from_json(qrng::read_json(path)));
        cert = qrng::to_json(result.per_detector);
        cert["averaged"] = qrng::to_json(result.averaged);
    }
    qrng::write_json(out / "certificate.json", cert);
    std::cout << cert.dump(2) << '\n';
    return kExitOk;
}

int cmd_extract(const CommonOptions& o, const std::string& input) {
    const auto config = resolve_config(o);
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    const fs::path path = input.empty() ? out / "raw_generate.bits" : fs::path(input);
    const auto raw = qrng::read_bit_file(path, bit_count_from(path.parent_path() / "raw.json", "bits"));
    const auto result = qrng::extract_stage(raw, config.extraction);
    qrng::write_extraction(result, out);
    std::cout << "h8 " << result.params.h8 << ", m " << result.params.m << ", extracted " << result.bits.size()
              << " bits\n";
    return kExitOk;
}

int cmd_test(const CommonOptions& o, const std::string& input) {
    const auto config = resolve_config(o);
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    const fs::path path = input.empty() ? out / "extracted.bits" : fs::path(input);
    const auto bits = qrng::read_bit_file(path, bit_count_from(path.parent_path() / "extracted.json", "bits"));
    const auto reports = qrng::run_suite(bits, config.stats.block_size, config.stats.alpha);
    qrng::write_json(out / "report.json", qrng::to_json(reports));
    qrng::RunSummary partial;
    partial.reports = reports;
    const auto text = qrng::format_summary_text(partial);
    std::cout << text.substr(text.find("Statistical tests"));
    bool all = true;
    for (const auto& r : reports) all = all && r.passed;
    return all ? kExitOk : kExitStage;
}

int cmd_image(const CommonOptions& o, const std::string& input, std::size_t width, std::size_t height) {
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    const fs::path path = input.empty() ? out / "extracted.bits" : fs::path(input);
    const auto bits = qrng::read_bit_file(path);
    qrng::write_image(out / "image.pgm", qrng::bits_to_image(bits, width, height));
    std::cout << "wrote " << (out / "image.pgm").string() << '\n';
    return kExitOk;
}

int cmd_stream(const CommonOptions& o, const std::string& input) {
    if (o.endpoint.empty()) throw qrng::ConfigError("stream needs --endpoint host:port");
    const fs::path path = input.empty() ? fs::path(o.out_dir) / "frames.log" : fs::path(input);
    const auto blocks = qrng::read_frame_log(path);
    const auto stats = qrng::stream_device(blocks, qrng::Endpoint::parse(o.endpoint));
    std::cout << "sent " << stats.sent << " frames, " << stats.bytes << " bytes\n";
    return kExitOk;
}

int cmd_serve(const CommonOptions& o, std::optional<std::uint64_t> max_datagrams, int idle_ms) {
    if (o.endpoint.empty()) throw qrng::ConfigError("serve needs --endpoint host:port");
    qrng::ServeOptions options;
    options.max_datagrams = max_datagrams;
    options.idle_timeout = std::chrono::milliseconds(idle_ms);
    options.stop = &g_stop;
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    qrng::UdpServer server(qrng::Endpoint::parse(o.endpoint));
    std::cout << "listening on port " << server.port() << std::endl;
    qrng::Collector collector(o.out_dir);
    const auto stats = server.run(collector, options);
    std::cout << "received " << stats.received << ", valid " << stats.valid << ", invalid " << stats.invalid
              << ", duplicates " << stats.duplicates << ", gaps " << collector.gaps().size() << '\n';
    return kExitOk;
}

int cmd_report(const CommonOptions& o) {
    const auto summary = qrng::summary_from_artifacts(o.out_dir);
    qrng::emit_report(summary, o.out_dir);
    std::cout << qrng::format_summary_text(summary);
    return kExitOk;
}

int cmd_bench(const CommonOptions& o, std::uint64_t bits) {
    const auto config = resolve_config(o);
    const auto r = qrng::benchmark_pipeline(config, bits);
    std::cout << "raw bits " << r.raw_bits << ", extracted " << r.extracted_bits << ", " << r.seconds << " s, "
              << r.raw_mbit_per_s() << " Mbit/s raw\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measurement-device-independent QRNG simulator and post-processing toolkit"};
    app.require_subcommand(1);
    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON pipeline configuration");
        sub->add_option("--seed", common.seed, "64-bit run seed");
        sub->add_option("--blocks", common.blocks, "number of protocol blocks");
        sub->add_option("--out-dir", common.out_dir, "artifact directory")->capture_default_str();
        sub->add_option("--endpoint", common.endpoint, "UDP endpoint host:port");
    };

    auto* run = app.add_subcommand("run", "full pipeline: simulate, certify, extract, test, report");
    auto* simulate = app.add_subcommand("simulate", "simulate blocks; writes frames.log, raw bits and statistics");
    auto* certify = app.add_subcommand("certify", "certify min-entropy from statistics.json or --p-h/--p-v");
    auto* extract = app.add_subcommand("extract", "Toeplitz extraction of raw generation bits");
    auto* test = app.add_subcommand("test", "statistical test battery on extracted bits");
    auto* image = app.add_subcommand("image", "render bits as a PGM image");
    auto* stream = app.add_subcommand("stream", "send frames.log blocks over UDP");
    auto* serve = app.add_subcommand("serve", "receive frames over UDP into per-state files");
    auto* report = app.add_subcommand("report", "rebuild summary.json/summary.txt from stage outputs");
    auto* bench = app.add_subcommand("bench", "wall-clock throughput of simulate -> pack -> extract");
    for (auto* sub : {run, simulate, certify, extract, test, image, stream, serve, report, bench}) add_common(sub);

    std::string stats_path;
    std::optional<double> p_h;
    std::optional<double> p_v;
    bool oracle = false;
    certify->add_option("--stats", stats_path, "statistics snapshot (default <out-dir>/statistics.json)");
    certify->add_option("--p-h", p_h, "observed p(0|H)");
    certify->add_option("--p-v", p_v, "observed p(1|V)");
    certify->add_flag("--oracle", oracle, "use the grid-search oracle instead of the numeric program");

    std::string input;
    for (auto* sub : {extract, test, image, stream}) sub->add_option("--input", input, "input file");
    std::size_t width = 250;
    std::size_t height = 250;
    image->add_option("--width", width)->capture_default_str();
    image->add_option("--height", height)->capture_default_str();

    std::optional<std::uint64_t> max_datagrams;
    int idle_ms = 5000;
    serve->add_option("--max-datagrams", max_datagrams, "stop after this many datagrams");
    serve->add_option("--idle-timeout-ms", idle_ms, "stop after this long without traffic")->capture_default_str();

    std::uint64_t bench_bits = 200'000'000;
    bench->add_option("--bits", bench_bits, "raw bits to generate")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(common);
        if (*simulate) return cmd_simulate(common);
        if (*certify) return cmd_certify(common, stats_path, p_h, p_v, oracle);
        if (*extract) return cmd_extract(common, input);
        if (*test) return cmd_test(common, input);
        if (*image) return cmd_image(common, input, width, height);
        if (*stream) return cmd_stream(common, input);
        if (*serve) return cmd_serve(common, max_datagrams, idle_ms);
        if (*report) return cmd_report(common);
        if (*bench) return cmd_bench(common, bench_bits);
    } catch (const qrng::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const qrng::StageError& e) {
        std::cerr << "stage failure [" << e.stage() << "]: " << e.what() << '\n';
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
    return kExitStage;
}
