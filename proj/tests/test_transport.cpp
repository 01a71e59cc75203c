#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "qrng/transport.hpp"

using namespace qrng;
namespace fs = std::filesystem;

namespace {

// Bit-at-a-time reflected CRC-32.
std::uint32_t reference_crc(std::span<const std::uint8_t> data) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (auto byte : data) {
        crc ^= byte;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return crc ^ 0xFFFFFFFFu;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("qrng_transport_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

BitBlock make_block(std::uint64_t id, BlockKind kind, std::size_t nbits, std::mt19937_64& gen) {
    BitBlock b;
    b.block_id = id;
    b.kind = kind;
    for (std::size_t i = 0; i < nbits; ++i) b.bits.push_back(gen() & 1);
    return b;
}

}  // namespace

TEST_CASE("crc32 matches the bitwise definition") {
    const std::string check = "123456789";
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(check.data()), check.size());
    CHECK(crc32(bytes) == 0xCBF43926u);
    CHECK(reference_crc(bytes) == 0xCBF43926u);
    std::mt19937_64 gen(1);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::uint8_t> data(gen() % 3000);
        for (auto& b : data) b = static_cast<std::uint8_t>(gen());
        CHECK(crc32(data) == reference_crc(data));
    }
}

TEST_CASE("frame layout") {
    SUBCASE("empty payload") {
        BitBlock b;
        b.block_id = 0;
        b.kind = BlockKind::Generate;
        std::vector<std::uint8_t> expect{'Q', 'R', 'N', 'G', 1, 0, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0};
        put_be32(expect, reference_crc(expect));
        CHECK(encode_frame(b) == expect);
        CHECK(expect.size() == 22);
    }
    SUBCASE("0xBEEF payload") {
        BitBlock b;
        b.block_id = 1;
        b.kind = BlockKind::TestH;
        b.bits = BitVector::from_bytes(std::vector<std::uint8_t>{0xBE, 0xEF});
        std::vector<std::uint8_t> expect{'Q', 'R', 'N', 'G', 1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 16, 0xBE, 0xEF};
        put_be32(expect, reference_crc(expect));
        CHECK(encode_frame(b) == expect);
    }
    SUBCASE("largest block") {
        std::mt19937_64 gen(2);
        const auto b = make_block(7, BlockKind::Generate, kBlockBits, gen);
        CHECK(encode_frame(b).size() == kMaxFrameSize);
    }
}

TEST_CASE("frame decoding") {
    std::mt19937_64 gen(3);
    const auto block = make_block(123456789012ull, BlockKind::TestV, 1001, gen);
    const auto frame = encode_frame(block);
    SUBCASE("round trip") {
        const auto decoded = decode_frame(frame);
        REQUIRE(std::holds_alternative<BitBlock>(decoded));
        CHECK(std::get<BitBlock>(decoded) == block);
    }
    SUBCASE("every single-bit flip is caught") {
        for (std::size_t i = 0; i < frame.size() * 8; i += 7) {
            auto bad = frame;
            bad[i / 8] ^= static_cast<std::uint8_t>(1u << (i % 8));
            CHECK(std::holds_alternative<FrameError>(decode_frame(bad)));
        }
        auto bad = frame;
        bad[30] ^= 0x10;
        CHECK(std::get<FrameError>(decode_frame(bad)) == FrameError::BadCrc);
    }
    SUBCASE("malformed frames") {
        CHECK(std::get<FrameError>(decode_frame(std::vector<std::uint8_t>{1, 2, 3})) == FrameError::Truncated);
        auto bad = frame;
        bad[0] = 'X';
        CHECK(std::get<FrameError>(decode_frame(bad)) == FrameError::BadMagic);
        auto shorter = frame;
        shorter.pop_back();
        CHECK(std::holds_alternative<FrameError>(decode_frame(shorter)));
    }
}

TEST_CASE("endpoint parsing") {
    const auto e = Endpoint::parse("127.0.0.1:9000");
    CHECK(e.host == "127.0.0.1");
    CHECK(e.port == 9000);
    CHECK_THROWS(Endpoint::parse("nonsense"));
    CHECK_THROWS(Endpoint::parse("host:99999"));
}

TEST_CASE("collector") {
    const auto dir = scratch_dir("collector");
    std::mt19937_64 gen(4);
    Collector c(dir);
    const auto g0 = make_block(0, BlockKind::Generate, 16, gen);
    const auto h1 = make_block(1, BlockKind::TestH, 12, gen);
    const auto g3 = make_block(3, BlockKind::Generate, 8, gen);
    c.ingest(encode_frame(g0));
    c.ingest(encode_frame(h1));
    c.ingest(encode_frame(g0));  // duplicate
    auto corrupted = encode_frame(make_block(2, BlockKind::TestV, 40, gen));
    corrupted[20] ^= 0x80;
    c.ingest(corrupted);
    c.ingest(encode_frame(g3));
    c.close();

    CHECK(c.stats().received == 5);
    CHECK(c.stats().valid == 3);
    CHECK(c.stats().duplicates == 1);
    CHECK(c.stats().invalid == 1);
    CHECK(c.gaps() == std::vector<std::uint64_t>{2});

    BitVector expect = g0.bits;
    expect.append(g3.bits);
    CHECK(read_bit_file(dir / Collector::kGenerateFile) == expect);
    std::ifstream h(dir / Collector::kTestHFile);
    std::string line;
    std::getline(h, line);
    const auto bytes = h1.bits.to_bytes();
    char hex[8];
    std::snprintf(hex, sizeof hex, "%02x%02x", bytes[0], bytes[1]);
    CHECK(line == "1 12 " + std::string(hex));
    CHECK(fs::file_size(dir / Collector::kTestVFile) == 0);
    CHECK(fs::exists(dir / Collector::kStatusFile));
    fs::remove_all(dir);
}

TEST_CASE("frame log round trip") {
    const auto dir = scratch_dir("log");
    std::mt19937_64 gen(5);
    std::vector<BitBlock> blocks;
    {
        FrameLogWriter w(dir / "frames.log");
        for (std::uint64_t i = 0; i < 20; ++i) {
            blocks.push_back(make_block(i, static_cast<BlockKind>(i % 3), 100 + i, gen));
            w.append(blocks.back());
        }
    }
    CHECK(read_frame_log(dir / "frames.log") == blocks);
    fs::remove_all(dir);
}

TEST_CASE("sending") {
    CHECK(stream_device(std::span<const BitBlock>{}, Endpoint::parse("127.0.0.1:1")).sent == 0);
    std::mt19937_64 gen(6);
    const std::vector<BitBlock> one{make_block(42, BlockKind::Generate, 64, gen)};
    try {
        stream_device(one, Endpoint{"127.0.0.1", 0});
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.block_id() == std::optional<std::uint64_t>(42));
    }
}

TEST_CASE("loopback with faults") {
    const auto dir = scratch_dir("loopback");
    std::mt19937_64 gen(7);
    const std::uint64_t count = 2000;
    std::vector<BitBlock> blocks;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto kind = i % 50 == 0 ? BlockKind::TestH : i % 50 == 1 ? BlockKind::TestV : BlockKind::Generate;
        blocks.push_back(make_block(i, kind, kind == BlockKind::Generate ? 4096 : 800, gen));
    }
    UdpServer server(Endpoint{"127.0.0.1", 0});
    Collector collector(dir);
    ServeOptions options;
    options.idle_timeout = std::chrono::milliseconds(1500);
    std::thread receiver([&] { server.run(collector, options); });

    StreamOptions stream;
    stream.faults = FaultPlan::random(count, 0.01, 0.01, 17);
    const auto sent = stream_device(blocks, Endpoint{"127.0.0.1", server.port()}, stream);
    receiver.join();

    CHECK(sent.dropped == stream.faults.drop.size());
    CHECK(sent.corrupted == stream.faults.corrupt.size());
    CHECK(sent.sent == count - sent.dropped);
    const auto& stats = collector.stats();
    CHECK(stats.received == sent.sent);
    CHECK(stats.invalid == stream.faults.corrupt.size());
    std::set<std::uint64_t> missing(stream.faults.drop);
    missing.insert(stream.faults.corrupt.begin(), stream.faults.corrupt.end());
    const auto gaps = collector.gaps(count - 1);
    CHECK(std::set<std::uint64_t>(gaps.begin(), gaps.end()) == missing);

    BitVector expect;
    for (const auto& b : blocks) {
        if (b.kind == BlockKind::Generate && !missing.contains(b.block_id)) expect.append(b.bits);
    }
    CHECK(read_bit_file(dir / Collector::kGenerateFile) == expect);
    fs::remove_all(dir);
}
