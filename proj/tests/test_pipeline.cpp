#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qrng/pipeline.hpp"

using namespace qrng;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("qrng_pipeline_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig small_config() {
    PipelineConfig c;
    c.blocks = 40;
    c.protocol.bias = 0.8;
    c.stats.block_size = 100'000;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("config json") {
    SUBCASE("round trip") {
        auto c = small_config();
        c.transport.drop_rate = 0.01;
        c.timeline.span_days = 22;
        c.source.degradation_curve = {{0, 1}, {3, 0.9}};
        const auto back = config_from_json(to_json(c));
        CHECK(to_json(back) == to_json(c));
    }
    SUBCASE("defaults for missing keys") {
        const auto c = config_from_json(json::object());
        CHECK(c.blocks == 10000);
        CHECK(c.protocol.bias == 0.99);
        CHECK(c.extraction.n == 400);
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(config_from_json(json{{"blocks", 5}, {"colour", "red"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"source", {{"mean", 1}}}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"blocks", "many"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"bias", 1.5}}).validate(), ConfigError);
        CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    }
}

TEST_CASE("image rendering") {
    const auto zeros = bits_to_image(BitVector(8), 1, 1);
    CHECK(zeros.back() == 0);
    const auto ones = bits_to_image(BitVector::from_string("11111111"), 1, 1);
    CHECK(ones.back() == 255);
    const std::string header = "P5\n250 250\n255\n";
    const auto full = bits_to_image(BitVector(500'000, true), 250, 250);
    CHECK(full.size() == header.size() + 62'500);
    CHECK(std::string(full.begin(), full.begin() + header.size()) == header);
    CHECK_THROWS_AS(bits_to_image(BitVector(499'992), 250, 250), PreconditionError);
}

TEST_CASE("rate table follows source degradation") {
    PipelineConfig c;
    c.protocol.bias = 1.0;
    c.blocks = 264;
    c.timeline.span_days = 22;
    c.timeline.rate_bucket_hours = 24;
    const auto sim = simulate(c);
    REQUIRE(sim.rate_table.size() == 22);
    const double first = sim.rate_table.front().rate();
    for (std::size_t i = 0; i < sim.rate_table.size(); ++i) {
        const auto& b = sim.rate_table[i];
        CAPTURE(b.start_day);
        if (b.end_day <= 8.0) CHECK(std::abs(b.rate() / first - 1.0) < 0.01);
        if (b.start_day >= 8.0) CHECK(b.rate() < sim.rate_table[i - 1].rate());
    }
    CHECK(sim.rate_table.back().rate() > 0.5 * first);
}

TEST_CASE("full run") {
    const auto dir = scratch_dir("run");
    const auto c = small_config();
    const auto summary = run_pipeline(c, dir);
    for (const char* f : {"statistics.json", "raw_generate.bits", "certificate.json", "extracted.bits",
                          "extracted.json", "report.json", "summary.json", "summary.txt"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto j = read_json(dir / "summary.json");
    for (const char* key : {"blocks", "raw_bits", "raw_rate", "discard_rate", "p_suc", "h_min", "certificate",
                            "extraction", "rate_table", "tests"}) {
        CHECK(j.contains(key));
    }
    CHECK(summary.blocks_per_kind[0] + summary.blocks_per_kind[1] + summary.blocks_per_kind[2] == c.blocks);
    REQUIRE(summary.certification);
    CHECK(std::abs(summary.certification->success.average.value - 0.97) < 0.01);
    CHECK(summary.reports.size() == 9);
    CHECK(summary.raw_bits == summary.blocks_per_kind[2] * kBlockBits);

    SUBCASE("report rebuilt from stage files matches") {
        const auto rebuilt = summary_from_artifacts(dir);
        CHECK(to_json(rebuilt) == to_json(summary));
    }
    SUBCASE("reproducible") {
        const auto dir2 = scratch_dir("run2");
        run_pipeline(c, dir2);
        for (const char* f : {"certificate.json", "extracted.bits", "report.json", "summary.json"}) {
            CHECK(slurp(dir / f) == slurp(dir2 / f));
        }
        fs::remove_all(dir2);
    }
    fs::remove_all(dir);
}

TEST_CASE("bias 1 has no test data") {
    const auto dir = scratch_dir("bias1");
    auto c = small_config();
    c.protocol.bias = 1.0;
    c.blocks = 3;
    try {
        run_pipeline(c, dir);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "certify");
        CHECK(std::string(e.what()).find("no test data") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("summary without tests") {
    RunSummary s;
    CHECK(format_summary_text(s).find("no statistical tests run") != std::string::npos);
    const auto dir = scratch_dir("empty");
    emit_report(s, dir);
    CHECK(read_json(dir / "summary.json").at("note") == "no statistical tests run");
    fs::remove_all(dir);
}

TEST_CASE("run over loopback transport") {
    const auto dir = scratch_dir("udp");
    auto c = small_config();
    c.transport.endpoint = "127.0.0.1:0";
    const auto via_udp = run_pipeline(c, dir);
    const auto local_dir = scratch_dir("local");
    c.transport.endpoint.clear();
    run_pipeline(c, local_dir);
    REQUIRE(via_udp.ingest);
    CHECK(via_udp.ingest->valid == c.blocks);
    CHECK(slurp(dir / "extracted.bits") == slurp(local_dir / "extracted.bits"));
    CHECK(slurp(dir / "certificate.json") == slurp(local_dir / "certificate.json"));
    fs::remove_all(dir);
    fs::remove_all(local_dir);
}
