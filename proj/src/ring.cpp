#include "cgd/ring.hpp"

#include <cmath>

namespace cgd {

std::mt19937_64 substream(uint64_t seed, uint32_t participant, uint32_t round,
                          uint32_t salt) {
    std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), participant, round, salt};
    return std::mt19937_64(seq);
}

uint32_t FixedPointCodec::encode_one(double x, uint64_t* clip_counter) const {
    if (x > clip_bound) {
        x = clip_bound;
        if (clip_counter) ++*clip_counter;
    } else if (x < -clip_bound) {
        x = -clip_bound;
        if (clip_counter) ++*clip_counter;
    }
    // nearbyint honours the default FE_TONEAREST mode: ties to even.
    auto q = int64_t(std::nearbyint(x * scale()));
    return uint32_t(q);  // two's complement, wraps mod 2^32
}

double FixedPointCodec::decode_one(uint32_t v) const {
    return double(int32_t(v)) / scale();
}

RingVec FixedPointCodec::encode(std::span<const double> x, uint64_t* clip_counter) const {
    RingVec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = encode_one(x[i], clip_counter);
    return out;
}

std::vector<double> FixedPointCodec::decode(const RingVec& v) const {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = decode_one(v[i]);
    return out;
}

ShareSet share(const RingVec& secret, const std::vector<uint16_t>& recipients,
               std::mt19937_64& rng) {
    if (recipients.empty()) throw std::invalid_argument("share: no recipients");
    ShareSet set;
    set.secret_len = secret.size();
    RingVec last = secret;
    std::uniform_int_distribution<uint32_t> uniform;
    for (size_t r = 0; r + 1 < recipients.size(); ++r) {
        RingVec sh(secret.size());
        for (auto& e : sh) e = uniform(rng);
        for (size_t i = 0; i < secret.size(); ++i) last[i] -= sh[i];
        set.per_recipient[recipients[r]] = std::move(sh);
    }
    set.per_recipient[recipients.back()] = std::move(last);
    return set;
}

RingVec reconstruct(const std::vector<RingVec>& shares) {
    if (shares.empty()) throw std::invalid_argument("reconstruct: no shares");
    RingVec sum(shares[0].size(), 0);
    for (const auto& sh : shares) ring_add_inplace(sum, sh);
    return sum;
}

}  // namespace cgd
