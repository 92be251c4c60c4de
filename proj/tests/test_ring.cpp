#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>

#include "cgd/ring.hpp"

using namespace cgd;

TEST_CASE("fixed-point encode hand values") {
    FixedPointCodec c;
    CHECK(c.encode_one(1.0) == 65536u);
    CHECK(c.encode_one(-0.5) == 4294934528u);
    RingVec z = c.encode(std::vector<double>{0.0, 0.0});
    CHECK(z == RingVec{0u, 0u});
}

TEST_CASE("fixed-point decode hand values") {
    FixedPointCodec c;
    CHECK(c.decode_one(65536u) == 1.0);
    CHECK(c.decode_one(4294934528u) == -0.5);
}

TEST_CASE("round-trip error bound over random values") {
    FixedPointCodec c;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-64.0, 64.0);
    double max_err = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double x = u(rng);
        double err = std::abs(c.decode_one(c.encode_one(x)) - x);
        max_err = std::max(max_err, err);
    }
    CHECK(max_err <= std::pow(2.0, -17));
}

TEST_CASE("encode(decode(v)) is the identity on in-range ring elements") {
    FixedPointCodec c;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<uint32_t> u;
    for (int i = 0; i < 100000; ++i) {
        uint32_t v = u(rng);
        if (std::abs(c.decode_one(v)) > c.clip_bound) continue;
        CHECK(c.encode_one(c.decode_one(v)) == v);
    }
}

TEST_CASE("clipping is silent and counted") {
    FixedPointCodec c(16, 1.0);
    uint64_t clipped = 0;
    RingVec v = c.encode(std::vector<double>{2.0, -3.0, 0.5}, &clipped);
    CHECK(clipped == 2);
    CHECK(c.decode_one(v[0]) == 1.0);
    CHECK(c.decode_one(v[1]) == -1.0);
}

TEST_CASE("codec rejects out-of-range construction") {
    CHECK_THROWS_AS(FixedPointCodec(7, 64.0), std::invalid_argument);
    CHECK_THROWS_AS(FixedPointCodec(25, 64.0), std::invalid_argument);
    CHECK_THROWS_AS(FixedPointCodec(16, 0.0), std::invalid_argument);
}

TEST_CASE("single recipient share equals the secret") {
    auto rng = substream(7, 0, 0, 0);
    ShareSet s = share(RingVec{0u}, {5}, rng);
    CHECK(s.per_recipient.at(5) == RingVec{0u});
}

TEST_CASE("share/reconstruct round-trip, several party counts") {
    std::mt19937_64 data_rng(99);
    std::uniform_int_distribution<uint32_t> u;
    for (size_t m : {1u, 2u, 3u, 10u, 100u}) {
        std::vector<uint16_t> ids(m);
        for (size_t i = 0; i < m; ++i) ids[i] = uint16_t(i);
        auto rng = substream(7, 1, uint32_t(m), 0);
        for (int trial = 0; trial < 200; ++trial) {
            RingVec secret(16);
            for (auto& e : secret) e = u(data_rng);
            ShareSet s = share(secret, ids, rng);
            std::vector<RingVec> parts;
            for (auto& [id, sh] : s.per_recipient) parts.push_back(sh);
            CHECK(reconstruct(parts) == secret);
        }
    }
}

TEST_CASE("brute-force m=3 reconstruction over many secrets") {
    std::mt19937_64 data_rng(3);
    std::uniform_int_distribution<uint32_t> u;
    auto rng = substream(11, 2, 0, 0);
    for (int trial = 0; trial < 10000; ++trial) {
        RingVec secret{u(data_rng)};
        ShareSet s = share(secret, {0, 1, 2}, rng);
        uint32_t sum = 0;
        for (auto& [id, sh] : s.per_recipient) sum += sh[0];
        CHECK(sum == secret[0]);
    }
}

TEST_CASE("independent sharings differ") {
    auto rng = substream(13, 0, 0, 0);
    RingVec secret{12345u, 678u};
    int distinct = 0;
    for (int i = 0; i < 1000; ++i) {
        ShareSet a = share(secret, {0, 1, 2}, rng);
        ShareSet b = share(secret, {0, 1, 2}, rng);
        if (a.per_recipient.at(0) != b.per_recipient.at(0)) ++distinct;
    }
    CHECK(distinct >= 990);
}

TEST_CASE("hand reconstruction values") {
    CHECK(reconstruct({{1u}, {2u}, {3u}}) == RingVec{6u});
    CHECK(reconstruct({{4294967295u}, {1u}}) == RingVec{0u});
}

TEST_CASE("reconstruct rejects mismatched lengths") {
    CHECK_THROWS_AS(reconstruct({{1u, 2u}, {3u}}), std::invalid_argument);
}

TEST_CASE("share rejects empty recipient list") {
    auto rng = substream(1, 0, 0, 0);
    CHECK_THROWS_AS(share(RingVec{1u}, {}, rng), std::invalid_argument);
}

TEST_CASE("homomorphism: sum of share sets reconstructs sum of secrets") {
    auto rng = substream(5, 0, 0, 0);
    std::mt19937_64 data_rng(17);
    std::uniform_int_distribution<uint32_t> u;
    for (int trial = 0; trial < 1000; ++trial) {
        RingVec a(8), b(8);
        for (auto& e : a) e = u(data_rng);
        for (auto& e : b) e = u(data_rng);
        ShareSet sa = share(a, {0, 1, 2, 3}, rng);
        ShareSet sb = share(b, {0, 1, 2, 3}, rng);
        std::vector<RingVec> combined;
        for (uint16_t id = 0; id < 4; ++id) {
            RingVec c = sa.per_recipient.at(id);
            ring_add_inplace(c, sb.per_recipient.at(id));
            combined.push_back(c);
        }
        RingVec expect = a;
        ring_add_inplace(expect, b);
        CHECK(reconstruct(combined) == expect);
    }
}

TEST_CASE("first m-1 shares do not depend on the secret") {
    // Same rng state, two different secrets: everything but the last share matches.
    RingVec s1{111u, 222u}, s2{999u, 1u};
    auto r1 = substream(21, 0, 0, 0);
    auto r2 = substream(21, 0, 0, 0);
    ShareSet a = share(s1, {0, 1, 2}, r1);
    ShareSet b = share(s2, {0, 1, 2}, r2);
    CHECK(a.per_recipient.at(0) == b.per_recipient.at(0));
    CHECK(a.per_recipient.at(1) == b.per_recipient.at(1));
    CHECK(a.per_recipient.at(2) != b.per_recipient.at(2));
}

TEST_CASE("substreams are independent across participants and rounds") {
    std::set<uint64_t> firsts;
    for (uint32_t p = 0; p < 10; ++p)
        for (uint32_t r = 0; r < 10; ++r) firsts.insert(substream(7, p, r, 0)());
    CHECK(firsts.size() == 100);
}
