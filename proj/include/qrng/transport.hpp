// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qrng/protocol.hpp"

namespace qrng {

// Frame layout (all integers big-endian):
//   magic "QRNG" | version u8 | block_id u64 | state_label u8 |
//   payload_bit_len u32 | payload (MSB-first) | crc32 u32 over everything before it
inline constexpr std::array<std::uint8_t, 4> kFrameMagic{0x51, 0x52, 0x4E, 0x47};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 18;
inline constexpr std::size_t kFrameOverhead = kFrameHeaderSize + 4;
inline constexpr std::size_t kMaxFrameSize = kFrameOverhead + kBlockBits / 8;

enum class FrameError { BadMagic, BadVersion, BadCrc, Truncated, BadLabel, BadLength };
std::string_view to_string(FrameError error);

/// Standard CRC-32 (polynomial 0x04C11DB7, reflected, init and xorout 0xFFFFFFFF).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_frame(const BitBlock& block);

/// Decoded frames carry no timestamp; produced_at is left at 0.
std::variant<BitBlock, FrameError> decode_frame(std::span<const std::uint8_t> bytes);

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port"
    static Endpoint parse(std::string_view text);
    std::string to_string() const;
};

class TransportError : public std::runtime_error {
  public:
    TransportError(const std::string& what, std::optional<std::uint64_t> block_id = std::nullopt)
        : std::runtime_error(what), block_id_(block_id) {}
    std::optional<std::uint64_t> block_id() const { return block_id_; }

  private:
    std::optional<std::uint64_t> block_id_;
};

/// Fault injection on the sending side, keyed by block id.
struct FaultPlan {
    std::set<std::uint64_t> drop;     // never sent
    std::set<std::uint64_t> corrupt;  // one payload or header bit flipped after CRC

    /// Chooses ids in [0, count) independently with the given rates; corruption
    /// is only applied to blocks that are not dropped.
    static FaultPlan random(std::uint64_t count, double drop_rate, double corrupt_rate, std::uint64_t seed);
};

struct StreamOptions {
    FaultPlan faults;
    /// Sending rate cap in bytes per second (0 = unpaced). UDP has no flow
    /// control, so the sender must not outrun the receiver's socket buffer.
    double max_bytes_per_second = 50e6;
};

struct SendStats {
    std::uint64_t sent = 0;
    std::uint64_t bytes = 0;
    std::uint64_t dropped = 0;
    std::uint64_t corrupted = 0;
};

using BlockSource = std::function<std::optional<BitBlock>()>;

/// One datagram per block, in source order.
SendStats stream_device(const BlockSource& source, const Endpoint& endpoint, const StreamOptions& options = {});
SendStats stream_device(std::span<const BitBlock> blocks, const Endpoint& endpoint,
                        const StreamOptions& options = {});

struct IngestStats {
    std::uint64_t received = 0;    // datagrams seen
    std::uint64_t valid = 0;       // frames stored
    std::uint64_t invalid = 0;     // rejected by decode_frame
    std::uint64_t duplicates = 0;  // valid frames whose block_id was already stored
    std::array<std::uint64_t, 3> frames_per_state{};  // indexed by state label
    std::array<std::uint64_t, 3> bits_per_state{};
    std::optional<std::uint64_t> max_block_id;
};

class IngestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Server-side ingest: validates frames and appends each payload to exactly
/// one per-state file in `storage_dir`:
///   generate.bits  raw generation bits, packed MSB-first
///   test_h.log     "<block_id> <bit_len> <hex payload>" per frame
///   test_v.log     same for |V> test blocks
class Collector {
  public:
    explicit Collector(std::filesystem::path storage_dir);
    ~Collector();
    Collector(const Collector&) = delete;
    Collector& operator=(const Collector&) = delete;

    void ingest(std::span<const std::uint8_t> datagram);
    /// Writes buffered bits (the final partial byte zero padded) and the status file.
    void close();

    const IngestStats& stats() const { return stats_; }
    /// Block ids in [0, last] never stored; `last` defaults to the largest id seen.
    std::vector<std::uint64_t> gaps(std::optional<std::uint64_t> last = std::nullopt) const;
    void write_status(std::optional<std::uint64_t> expected_last = std::nullopt) const;

    static constexpr const char* kGenerateFile = "generate.bits";
    static constexpr const char* kTestHFile = "test_h.log";
    static constexpr const char* kTestVFile = "test_v.log";
    static constexpr const char* kStatusFile = "status.json";

  private:
    void store(const BitBlock& block);

    std::filesystem::path dir_;
    std::ofstream generate_;
    std::ofstream test_h_;
    std::ofstream test_v_;
    BitVector pending_;  // generate bits not yet forming a whole byte
    std::set<std::uint64_t> seen_;
    IngestStats stats_;
    bool closed_ = false;
};

struct ServeOptions {
    std::optional<std::uint64_t> max_datagrams;  // stop after this many datagrams
    std::chrono::milliseconds idle_timeout{2000};
    std::uint64_t status_every = 100;
    const std::atomic<bool>* stop = nullptr;
};

/// Bound UDP socket feeding a Collector.
class UdpServer {
  public:
    explicit UdpServer(const Endpoint& endpoint);
    ~UdpServer();
    UdpServer(const UdpServer&) = delete;
    UdpServer& operator=(const UdpServer&) = delete;

    std::uint16_t port() const { return port_; }
    /// Receives until max_datagrams, idle timeout, or stop flag.
    IngestStats run(Collector& collector, const ServeOptions& options = {});

  private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

IngestStats serve_collect(const Endpoint& endpoint, const std::filesystem::path& storage_dir,
                          const ServeOptions& options = {});

/// Reads the packed bits written to generate.bits, truncated to `bit_count` when given.
BitVector read_bit_file(const std::filesystem::path& path, std::optional<std::size_t> bit_count = std::nullopt);
void write_bit_file(const std::filesystem::path& path, const BitVector& bits);

/// Append-only log of encoded frames: u32 big-endian length, then the frame.
class FrameLogWriter {
  public:
    explicit FrameLogWriter(const std::filesystem::path& path);
    void append(const BitBlock& block);

  private:
    std::ofstream out_;
};
std::vector<BitBlock> read_frame_log(const std::filesystem::path& path);

}  // namespace qrng
