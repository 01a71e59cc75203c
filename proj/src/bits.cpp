// SPDX-License-Identifier: Apache-2.0
#include "qrng/bits.hpp"

#include <stdexcept>

namespace qrng {

BitVector::BitVector(std::size_t count, bool value)
    : words_((count + 63) / 64, value ? ~std::uint64_t{0} : 0), size_(count) {
    if (value && (count & 63) != 0) {
        words_.back() &= ~std::uint64_t{0} << (64 - (count & 63));
    }
}

BitVector BitVector::from_bytes(std::span<const std::uint8_t> bytes, std::size_t bit_count) {
    if (bit_count > bytes.size() * 8) {
        throw std::invalid_argument("BitVector::from_bytes: bit count exceeds byte buffer");
    }
    BitVector out;
    out.size_ = bit_count;
    out.words_.assign((bit_count + 63) / 64, 0);
    const std::size_t nbytes = (bit_count + 7) / 8;
    for (std::size_t k = 0; k < nbytes; ++k) {
        out.words_[k >> 3] |= std::uint64_t{bytes[k]} << (56 - 8 * (k & 7));
    }
    if ((bit_count & 63) != 0) {
        out.words_.back() &= ~std::uint64_t{0} << (64 - (bit_count & 63));
    }
    return out;
}

BitVector BitVector::from_string(std::string_view text) {
    BitVector out;
    for (char c : text) {
        if (c == '0' || c == '1') out.push_back(c == '1');
    }
    return out;
}

std::uint64_t BitVector::word_at(std::size_t offset) const noexcept {
    const std::size_t q = offset >> 6;
    const unsigned r = offset & 63;
    if (q >= words_.size()) return 0;
    std::uint64_t w = words_[q] << r;
    if (r != 0 && q + 1 < words_.size()) w |= words_[q + 1] >> (64 - r);
    // tail bits past size_ are always zero
    return w;
}

void BitVector::append(const BitVector& other) { append(other, 0, other.size_); }

void BitVector::append(const BitVector& other, std::size_t offset, std::size_t count) {
    if (offset + count > other.size_) {
        throw std::out_of_range("BitVector::append: range exceeds source");
    }
    if (count == 0) return;
    const std::size_t new_size = size_ + count;
    words_.resize((new_size + 63) / 64, 0);
    std::size_t done = 0;
    while (done < count) {
        const std::size_t dst = size_ + done;
        const unsigned dst_r = dst & 63;
        const std::size_t take = std::min<std::size_t>(64 - dst_r, count - done);
        std::uint64_t chunk = other.word_at(offset + done);
        chunk &= take == 64 ? ~std::uint64_t{0} : ~(~std::uint64_t{0} >> take);
        words_[dst >> 6] |= chunk >> dst_r;
        done += take;
    }
    size_ = new_size;
}

BitVector BitVector::slice(std::size_t offset, std::size_t count) const {
    BitVector out;
    out.append(*this, offset, count);
    return out;
}

std::size_t BitVector::popcount() const noexcept {
    std::size_t total = 0;
    for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
}

std::vector<std::uint8_t> BitVector::to_bytes() const {
    std::vector<std::uint8_t> out((size_ + 7) / 8);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = static_cast<std::uint8_t>(words_[k >> 3] >> (56 - 8 * (k & 7)));
    }
    return out;
}

std::string BitVector::to_string() const {
    std::string s;
    s.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) s.push_back((*this)[i] ? '1' : '0');
    return s;
}

BitVector& BitVector::operator^=(const BitVector& other) {
    if (other.size_ != size_) throw std::invalid_argument("BitVector xor: size mismatch");
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] ^= other.words_[k];
    return *this;
}

}  // namespace qrng
