#pragma once

// Additive secret sharing over Z_2^32 with a fixed-point real<->ring codec.
// Sharing is n-of-n: any strict subset of shares is uniform noise.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace cgd {

using RingVec = std::vector<uint32_t>;

// Deterministic substream for (seed, participant, round, salt). Every source
// of protocol randomness goes through this so runs are reproducible.
std::mt19937_64 substream(uint64_t seed, uint32_t participant, uint32_t round,
                          uint32_t salt);

struct FixedPointCodec {
    int frac_bits = 16;
    double clip_bound = 64.0;

    FixedPointCodec() = default;
    FixedPointCodec(int bits, double clip) : frac_bits(bits), clip_bound(clip) {
        if (bits < 8 || bits > 24) throw std::invalid_argument("frac_bits must be in [8,24]");
        if (clip <= 0) throw std::invalid_argument("clip_bound must be positive");
    }

    double scale() const { return double(1u << frac_bits); }

    // Values beyond +-clip_bound are clipped silently; pass clip_counter to
    // observe how often that happened.
    uint32_t encode_one(double x, uint64_t* clip_counter = nullptr) const;
    double decode_one(uint32_t v) const;

    RingVec encode(std::span<const double> x, uint64_t* clip_counter = nullptr) const;
    std::vector<double> decode(const RingVec& v) const;
};

struct ShareSet {
    std::map<uint16_t, RingVec> per_recipient;
    size_t secret_len = 0;
};

// Splits `secret` into |recipients| additive shares. The first m-1 shares are
// drawn uniformly from the rng (independent of the secret); the last absorbs
// the difference.
ShareSet share(const RingVec& secret, const std::vector<uint16_t>& recipients,
               std::mt19937_64& rng);

// Element-wise ring sum of all share vectors.
RingVec reconstruct(const std::vector<RingVec>& shares);

inline void ring_add_inplace(RingVec& acc, const RingVec& v) {
    if (acc.size() != v.size()) throw std::invalid_argument("ring length mismatch");
    for (size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

inline void ring_sub_inplace(RingVec& acc, const RingVec& v) {
    if (acc.size() != v.size()) throw std::invalid_argument("ring length mismatch");
    for (size_t i = 0; i < v.size(); ++i) acc[i] -= v[i];
}

}  // namespace cgd
