#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "qrng/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(QRNG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("qrng_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::uint16_t free_udp_port() {
    qrng::UdpServer probe(qrng::Endpoint{"127.0.0.1", 0});
    return probe.port();
}

}  // namespace

TEST_CASE("exit codes") {
    const auto dir = scratch_dir("codes");
    CHECK(run("--help") == 0);
    CHECK(run("") == 2);
    CHECK(run("run --blocks nope") == 2);
    {
        std::ofstream(dir / "bad.json") << R"({"blocks": 5, "unknown": 1})";
    }
    CHECK(run("run --config " + (dir / "bad.json").string() + " --out-dir " + dir.string()) == 2);
    {
        std::ofstream(dir / "nobias.json") << R"({"bias": 1.0})";
    }
    CHECK(run("run --config " + (dir / "nobias.json").string() + " --blocks 2 --out-dir " + dir.string()) == 1);
    CHECK(run("certify --out-dir " + (dir / "missing").string()) == 1);
    fs::remove_all(dir);
}

TEST_CASE("stages run standalone on files from earlier stages") {
    const auto dir = scratch_dir("stages");
    {
        std::ofstream(dir / "cfg.json") << R"({"bias": 0.8, "stats": {"block_size": 100000}})";
    }
    const std::string common = " --config " + (dir / "cfg.json").string() + " --seed 5 --out-dir " + dir.string();
    REQUIRE(run("simulate --blocks 30" + common) == 0);
    CHECK(fs::exists(dir / "frames.log"));
    CHECK(fs::exists(dir / "statistics.json"));
    CHECK(run("certify" + common) == 0);
    CHECK(fs::exists(dir / "certificate.json"));
    CHECK(run("extract" + common) == 0);
    CHECK(fs::exists(dir / "extracted.json"));
    const int test_status = run("test" + common);
    CHECK((test_status == 0 || test_status == 1));
    CHECK(fs::exists(dir / "report.json"));
    CHECK(run("image" + common) == 0);
    CHECK(fs::exists(dir / "image.pgm"));
    CHECK(run("report" + common) == 0);
    CHECK(fs::exists(dir / "summary.json"));

    // the staged artifacts match a one-shot run with the same config and seed
    const auto whole = dir / "whole";
    REQUIRE(run("run --blocks 30 --config " + (dir / "cfg.json").string() + " --seed 5 --out-dir " + whole.string()) == 0);
    for (const char* f : {"certificate.json", "extracted.bits", "extracted.json", "report.json", "statistics.json"}) {
        CAPTURE(f);
        std::ifstream a(dir / f, std::ios::binary);
        std::ifstream b(whole / f, std::ios::binary);
        CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
    }

    SUBCASE("stream and serve") {
        const auto port = std::to_string(free_udp_port());
        const auto storage = dir / "server";
        const auto blocks = qrng::read_frame_log(dir / "frames.log");
        int serve_status = -1;
        std::thread server([&] {
            serve_status = run("serve --endpoint 127.0.0.1:" + port + " --max-datagrams " +
                               std::to_string(blocks.size()) + " --idle-timeout-ms 5000 --out-dir " + storage.string());
        });
        std::this_thread::sleep_for(std::chrono::milliseconds(300));
        CHECK(run("stream --endpoint 127.0.0.1:" + port + " --out-dir " + dir.string()) == 0);
        server.join();
        CHECK(serve_status == 0);
        const auto status = qrng::read_json(storage / "status.json");
        CHECK(status.at("valid").get<std::size_t>() == blocks.size());
        std::ifstream a(storage / "generate.bits", std::ios::binary);
        std::ifstream b(dir / "raw_generate.bits", std::ios::binary);
        CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
    }
    fs::remove_all(dir);
}
