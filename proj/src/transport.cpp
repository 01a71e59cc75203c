// SPDX-License-Identifier: Apache-2.0
#include "qrng/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <thread>

#include <json.hpp>
#include <zlib.h>

namespace qrng {

std::string_view to_string(FrameError error) {
    switch (error) {
        case FrameError::BadMagic: return "BadMagic";
        case FrameError::BadVersion: return "BadVersion";
        case FrameError::BadCrc: return "BadCrc";
        case FrameError::Truncated: return "Truncated";
        case FrameError::BadLabel: return "BadLabel";
        case FrameError::BadLength: return "BadLength";
    }
    return "Unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

namespace {

void put_be(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | in[offset + i];
    return v;
}

std::string errno_message(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint& endpoint) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(endpoint.port);
    if (inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* result = nullptr;
    if (getaddrinfo(endpoint.host.c_str(), nullptr, &hints, &result) != 0 || result == nullptr) {
        throw TransportError("cannot resolve host '" + endpoint.host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
    freeaddrinfo(result);
    return addr;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const BitBlock& block) {
    if (block.bits.size() > kBlockBits) {
        throw std::invalid_argument("encode_frame: payload of " + std::to_string(block.bits.size()) +
                                    " bits exceeds " + std::to_string(kBlockBits));
    }
    std::vector<std::uint8_t> out(kFrameMagic.begin(), kFrameMagic.end());
    out.reserve(kFrameOverhead + (block.bits.size() + 7) / 8);
    out.push_back(kFrameVersion);
    put_be(out, block.block_id, 8);
    out.push_back(static_cast<std::uint8_t>(block.kind));
    put_be(out, block.bits.size(), 4);
    const auto payload = block.bits.to_bytes();
    out.insert(out.end(), payload.begin(), payload.end());
    put_be(out, crc32(out), 4);
    return out;
}

std::variant<BitBlock, FrameError> decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameOverhead) return FrameError::Truncated;
    if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin())) return FrameError::BadMagic;
    if (bytes[4] != kFrameVersion) return FrameError::BadVersion;
    const std::uint8_t label = bytes[13];
    if (label > 2) return FrameError::BadLabel;
    const auto bit_len = get_be(bytes, 14, 4);
    if (bit_len > kBlockBits) return FrameError::BadLength;
    const std::size_t payload_bytes = (bit_len + 7) / 8;
    if (bytes.size() < kFrameOverhead + payload_bytes) return FrameError::Truncated;
    if (bytes.size() > kFrameOverhead + payload_bytes) return FrameError::BadLength;
    const std::size_t body = kFrameHeaderSize + payload_bytes;
    if (crc32(bytes.first(body)) != get_be(bytes, body, 4)) return FrameError::BadCrc;

    BitBlock block;
    block.block_id = get_be(bytes, 5, 8);
    block.kind = static_cast<BlockKind>(label);
    block.bits = BitVector::from_bytes(bytes.subspan(kFrameHeaderSize, payload_bytes), bit_len);
    if (block.bits.to_bytes() != std::vector<std::uint8_t>(bytes.begin() + kFrameHeaderSize,
                                                           bytes.begin() + body)) {
        return FrameError::BadLength;  // non-zero padding bits
    }
    return block;
}

Endpoint Endpoint::parse(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw std::invalid_argument("endpoint must be host:port, got '" + std::string(text) + "'");
    }
    unsigned port = 0;
    const auto digits = text.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || port > 65535) {
        throw std::invalid_argument("endpoint port is not a number in [0, 65535]: '" + std::string(text) + "'");
    }
    return {std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

FaultPlan FaultPlan::random(std::uint64_t count, double drop_rate, double corrupt_rate, std::uint64_t seed) {
    FaultPlan plan;
    Rng rng(seed);
    for (std::uint64_t id = 0; id < count; ++id) {
        const bool drop = rng.bernoulli(drop_rate);
        const bool corrupt = rng.bernoulli(corrupt_rate);
        if (drop) {
            plan.drop.insert(id);
        } else if (corrupt) {
            plan.corrupt.insert(id);
        }
    }
    return plan;
}

SendStats stream_device(const BlockSource& source, const Endpoint& endpoint, const StreamOptions& options) {
    SendStats stats;
    std::optional<BitBlock> block = source();
    if (!block) return stats;

    sockaddr_in addr{};
    try {
        addr = resolve(endpoint);
    } catch (const TransportError& e) {
        throw TransportError(e.what(), block->block_id);
    }
    const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw TransportError(errno_message("socket"), block->block_id);
    int sndbuf = 8 << 20;
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &sndbuf, sizeof sndbuf);

    const auto start = std::chrono::steady_clock::now();
    for (; block; block = source()) {
        const auto id = block->block_id;
        if (options.faults.drop.contains(id)) {
            ++stats.dropped;
            continue;
        }
        auto frame = encode_frame(*block);
        if (options.faults.corrupt.contains(id)) {
            // flip a bit inside the CRC-covered region
            const std::size_t target = frame.size() > kFrameOverhead ? kFrameHeaderSize : 5;
            frame[target] ^= 0x01;
            ++stats.corrupted;
        }
        const ssize_t n = ::sendto(fd, frame.data(), frame.size(), 0, reinterpret_cast<const sockaddr*>(&addr),
                                   sizeof addr);
        if (n < 0 || static_cast<std::size_t>(n) != frame.size()) {
            const std::string msg = errno_message(("send block " + std::to_string(id)).c_str());
            ::close(fd);
            throw TransportError(msg, id);
        }
        ++stats.sent;
        stats.bytes += frame.size();
        if (options.max_bytes_per_second > 0.0) {
            const auto due = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(stats.bytes / options.max_bytes_per_second));
            if (due - std::chrono::steady_clock::now() > std::chrono::microseconds(100)) {
                std::this_thread::sleep_until(due);
            }
        }
    }
    ::close(fd);
    return stats;
}

SendStats stream_device(std::span<const BitBlock> blocks, const Endpoint& endpoint, const StreamOptions& options) {
    std::size_t next = 0;
    return stream_device(
        [&]() -> std::optional<BitBlock> {
            if (next == blocks.size()) return std::nullopt;
            return blocks[next++];
        },
        endpoint, options);
}

Collector::Collector(std::filesystem::path storage_dir) : dir_(std::move(storage_dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    generate_.open(dir_ / kGenerateFile, std::ios::binary | std::ios::app);
    test_h_.open(dir_ / kTestHFile, std::ios::app);
    test_v_.open(dir_ / kTestVFile, std::ios::app);
    if (!generate_ || !test_h_ || !test_v_) {
        throw IngestError("cannot open storage files in '" + dir_.string() + "'");
    }
}

Collector::~Collector() {
    try {
        close();
    } catch (...) {
        // destructors must not throw; close() reports errors when called explicitly
    }
}

void Collector::ingest(std::span<const std::uint8_t> datagram) {
    ++stats_.received;
    auto decoded = decode_frame(datagram);
    if (std::holds_alternative<FrameError>(decoded)) {
        ++stats_.invalid;
        return;
    }
    const auto& block = std::get<BitBlock>(decoded);
    if (!seen_.insert(block.block_id).second) {
        ++stats_.duplicates;
        return;
    }
    store(block);
    ++stats_.valid;
    const auto label = static_cast<std::size_t>(block.kind);
    ++stats_.frames_per_state[label];
    stats_.bits_per_state[label] += block.bits.size();
    stats_.max_block_id = std::max(stats_.max_block_id.value_or(0), block.block_id);
}

void Collector::store(const BitBlock& block) {
    if (block.kind == BlockKind::Generate) {
        pending_.append(block.bits);
        const std::size_t whole = pending_.size() / 8 * 8;
        const auto bytes = pending_.slice(0, whole).to_bytes();
        generate_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        pending_ = pending_.slice(whole, pending_.size() - whole);
        if (!generate_) throw IngestError("write failed: " + (dir_ / kGenerateFile).string());
        return;
    }
    auto& out = block.kind == BlockKind::TestH ? test_h_ : test_v_;
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (auto b : block.bits.to_bytes()) {
        hex.push_back(kHex[b >> 4]);
        hex.push_back(kHex[b & 15]);
    }
    out << block.block_id << ' ' << block.bits.size() << ' ' << hex << '\n';
    if (!out) throw IngestError("write failed for test log in " + dir_.string());
}

void Collector::close() {
    if (closed_) return;
    closed_ = true;
    if (!pending_.empty()) {
        const auto bytes = pending_.to_bytes();
        generate_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        pending_.clear();
    }
    generate_.flush();
    test_h_.flush();
    test_v_.flush();
    if (!generate_ || !test_h_ || !test_v_) throw IngestError("flush failed in " + dir_.string());
    write_status();
}

std::vector<std::uint64_t> Collector::gaps(std::optional<std::uint64_t> last) const {
    std::vector<std::uint64_t> out;
    const auto end = last ? last : stats_.max_block_id;
    if (!end) return out;
    auto it = seen_.begin();
    for (std::uint64_t id = 0; id <= *end; ++id) {
        while (it != seen_.end() && *it < id) ++it;
        if (it == seen_.end() || *it != id) out.push_back(id);
    }
    return out;
}

void Collector::write_status(std::optional<std::uint64_t> expected_last) const {
    nlohmann::json j;
    j["received"] = stats_.received;
    j["valid"] = stats_.valid;
    j["invalid"] = stats_.invalid;
    j["duplicates"] = stats_.duplicates;
    j["frames"] = {{"test_h", stats_.frames_per_state[0]},
                   {"test_v", stats_.frames_per_state[1]},
                   {"generate", stats_.frames_per_state[2]}};
    j["bits"] = {{"test_h", stats_.bits_per_state[0]},
                 {"test_v", stats_.bits_per_state[1]},
                 {"generate", stats_.bits_per_state[2]}};
    j["max_block_id"] = stats_.max_block_id ? nlohmann::json(*stats_.max_block_id) : nlohmann::json(nullptr);
    j["gaps"] = gaps(expected_last);
    const auto tmp = dir_ / (std::string(kStatusFile) + ".tmp");
    {
        std::ofstream out(tmp);
        out << j.dump(2) << '\n';
        if (!out) throw IngestError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, dir_ / kStatusFile);
}

UdpServer::UdpServer(const Endpoint& endpoint) {
    const sockaddr_in addr = resolve(endpoint);
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw TransportError(errno_message("socket"));
    // SO_RCVBUFFORCE ignores rmem_max but needs CAP_NET_ADMIN
    int rcvbuf = 64 << 20;
    if (::setsockopt(fd_, SOL_SOCKET, SO_RCVBUFFORCE, &rcvbuf, sizeof rcvbuf) != 0) {
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof rcvbuf);
    }
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const std::string msg = errno_message(("bind " + endpoint.to_string()).c_str());
        ::close(fd_);
        throw TransportError(msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

UdpServer::~UdpServer() {
    if (fd_ >= 0) ::close(fd_);
}

IngestStats UdpServer::run(Collector& collector, const ServeOptions& options) {
    std::vector<std::uint8_t> buffer(65536);
    auto last_activity = std::chrono::steady_clock::now();
    std::uint64_t since_status = 0;
    for (;;) {
        if (options.stop && options.stop->load()) break;
        if (options.max_datagrams && collector.stats().received >= *options.max_datagrams) break;
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 50);
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_message("poll"));
        }
        if (ready == 0) {
            if (std::chrono::steady_clock::now() - last_activity > options.idle_timeout) break;
            continue;
        }
        const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(errno_message("recv"));
        }
        last_activity = std::chrono::steady_clock::now();
        collector.ingest(std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(n)));
        if (options.status_every != 0 && ++since_status >= options.status_every) {
            collector.write_status();
            since_status = 0;
        }
    }
    collector.close();
    return collector.stats();
}

IngestStats serve_collect(const Endpoint& endpoint, const std::filesystem::path& storage_dir,
                          const ServeOptions& options) {
    UdpServer server(endpoint);
    Collector collector(storage_dir);
    return server.run(collector, options);
}

BitVector read_bit_file(const std::filesystem::path& path, std::optional<std::size_t> bit_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t available = bytes.size() * 8;
    if (bit_count && *bit_count > available) {
        throw std::runtime_error(path.string() + " holds fewer bits than requested");
    }
    return BitVector::from_bytes(bytes, bit_count.value_or(available));
}

void write_bit_file(const std::filesystem::path& path, const BitVector& bits) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const auto bytes = bits.to_bytes();
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

FrameLogWriter::FrameLogWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw std::runtime_error("cannot open frame log " + path.string());
}

void FrameLogWriter::append(const BitBlock& block) {
    const auto frame = encode_frame(block);
    std::vector<std::uint8_t> len;
    put_be(len, frame.size(), 4);
    out_.write(reinterpret_cast<const char*>(len.data()), 4);
    out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    if (!out_) throw std::runtime_error("frame log write failed");
}

std::vector<BitBlock> read_frame_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open frame log " + path.string());
    std::vector<BitBlock> blocks;
    std::array<std::uint8_t, 4> len{};
    while (in.read(reinterpret_cast<char*>(len.data()), 4)) {
        const auto size = get_be(len, 0, 4);
        if (size > kMaxFrameSize) throw std::runtime_error("frame log: oversized record");
        std::vector<std::uint8_t> frame(size);
        if (!in.read(reinterpret_cast<char*>(frame.data()), static_cast<std::streamsize>(size))) {
            throw std::runtime_error("frame log: truncated record");
        }
        auto decoded = decode_frame(frame);
        if (auto* err = std::get_if<FrameError>(&decoded)) {
            throw std::runtime_error("frame log: " + std::string(to_string(*err)));
        }
        blocks.push_back(std::move(std::get<BitBlock>(decoded)));
    }
    return blocks;
}

}  // namespace qrng
