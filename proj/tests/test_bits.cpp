#include <doctest.h>

#include <random>

#include "qrng/bits.hpp"

using qrng::BitVector;

TEST_CASE("push_back and indexing agree across word boundaries") {
    std::mt19937 gen(11);
    std::vector<bool> ref;
    BitVector v;
    for (int i = 0; i < 1000; ++i) {
        const bool b = gen() & 1;
        ref.push_back(b);
        v.push_back(b);
    }
    REQUIRE(v.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(v[i] == ref[i]);
    CHECK(v.popcount() == static_cast<std::size_t>(std::count(ref.begin(), ref.end(), true)));
}

TEST_CASE("bytes are MSB-first") {
    const auto v = BitVector::from_string("10000001 1");
    const auto bytes = v.to_bytes();
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x81);
    CHECK(bytes[1] == 0x80);
    CHECK(BitVector::from_bytes(bytes, 9) == v);
}

TEST_CASE("word_at matches bitwise read at every offset") {
    std::mt19937_64 gen(5);
    BitVector v;
    for (int i = 0; i < 300; ++i) v.push_back(gen() & 1);
    for (std::size_t off = 0; off < v.size(); ++off) {
        std::uint64_t expect = 0;
        for (std::size_t k = 0; k < 64; ++k) {
            expect = (expect << 1) | ((off + k < v.size()) ? v[off + k] : 0);
        }
        CHECK(v.word_at(off) == expect);
    }
}

TEST_CASE("append with offset and slice") {
    const auto a = BitVector::from_string("1101001110001011101");
    BitVector b = BitVector::from_string("01");
    b.append(a, 3, 10);
    CHECK(b.to_string() == "01" + a.to_string().substr(3, 10));
    CHECK(a.slice(5, 7).to_string() == a.to_string().substr(5, 7));
    BitVector c;
    c.append(a);
    c.append(a);
    CHECK(c.to_string() == a.to_string() + a.to_string());
}

TEST_CASE("xor") {
    const auto a = BitVector::from_string("1100");
    const auto b = BitVector::from_string("1010");
    CHECK((a ^ b).to_string() == "0110");
}
