// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qrng {

/// Growable packed bit sequence. Bit i lives at position 63 - (i % 64) of
/// word i / 64, so serialising the words big-endian yields an MSB-first byte
/// stream.
class BitVector {
  public:
    BitVector() = default;
    explicit BitVector(std::size_t count, bool value = false);

    static BitVector from_bytes(std::span<const std::uint8_t> bytes, std::size_t bit_count);
    static BitVector from_bytes(std::span<const std::uint8_t> bytes) {
        return from_bytes(bytes, bytes.size() * 8);
    }
    /// Parses a string of '0' and '1' characters; other characters are ignored.
    static BitVector from_string(std::string_view text);

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

    bool operator[](std::size_t i) const noexcept {
        return (words_[i >> 6] >> (63 - (i & 63))) & 1u;
    }
    void set(std::size_t i, bool value) noexcept {
        const std::uint64_t mask = std::uint64_t{1} << (63 - (i & 63));
        if (value) {
            words_[i >> 6] |= mask;
        } else {
            words_[i >> 6] &= ~mask;
        }
    }

    void push_back(bool value) {
        if ((size_ & 63) == 0) words_.push_back(0);
        if (value) words_.back() |= std::uint64_t{1} << (63 - (size_ & 63));
        ++size_;
    }
    void append(const BitVector& other);
    /// Appends bits [offset, offset + count) of `other`.
    void append(const BitVector& other, std::size_t offset, std::size_t count);
    void reserve(std::size_t bits) { words_.reserve((bits + 63) / 64); }
    void clear() noexcept {
        words_.clear();
        size_ = 0;
    }

    /// 64 bits starting at `offset`, MSB-first; bits past the end read as 0.
    std::uint64_t word_at(std::size_t offset) const noexcept;

    BitVector slice(std::size_t offset, std::size_t count) const;
    std::size_t popcount() const noexcept;

    /// MSB-first bytes; the final partial byte is zero padded.
    std::vector<std::uint8_t> to_bytes() const;
    std::string to_string() const;

    std::span<const std::uint64_t> words() const noexcept { return words_; }

    BitVector& operator^=(const BitVector& other);
    friend BitVector operator^(BitVector a, const BitVector& b) { return a ^= b; }
    friend bool operator==(const BitVector& a, const BitVector& b) noexcept {
        return a.size_ == b.size_ && a.words_ == b.words_;
    }

  private:
    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;
};

}  // namespace qrng
