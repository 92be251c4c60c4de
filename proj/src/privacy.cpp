#include "cgd/privacy.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <set>
#include <sstream>
#include <tuple>

#include "cgd/baselines.hpp"
#include "cgd/ring.hpp"

namespace cgd {

namespace {

constexpr uint32_t kDummySalt = 0xD0D0;

bool is_member(const Coalition& c, uint16_t id) {
    return std::binary_search(c.members.begin(), c.members.end(), id);
}

std::set<uint16_t> contributor_set(const SessionShape& shape) {
    std::set<uint16_t> out;
    for (const SumSlot& slot : shape.slots)
        out.insert(slot.contributors.begin(), slot.contributors.end());
    return out;
}

bool key_matches(const WireMessage& m, const SlotKey& key) {
    return m.round == key.round && m.layer_tag == key.layer_tag && m.group_tag == key.group_tag;
}

// What one member can reconstruct for one slot from its own transcript and,
// when it contributed, its own input. Aggregates only: the protocol never
// puts anything finer within reach.
std::optional<RingVec> member_total(const Transcript& t, uint16_t member, const SumSlot& slot,
                                    const SlotKey& key, const SessionShape& shape,
                                    const RingVec* own_input) {
    bool contributes = std::binary_search(slot.contributors.begin(), slot.contributors.end(),
                                          member);
    // A RESULT carries the finished sum, whichever direction it travelled.
    for (const TranscriptEntry& e : t)
        if (e.msg.kind == MsgKind::Result && key_matches(e.msg, key)) return e.msg.payload;

    bool reconstructor = shape.cfg.topology == Topology::AllToAll
                             ? std::binary_search(slot.delivery.begin(), slot.delivery.end(),
                                                  member)
                             : member == shape.cfg.aggregator;
    if (!reconstructor) return std::nullopt;

    std::optional<RingVec> sum;
    auto add = [&](const RingVec& v) {
        if (sum)
            ring_add_inplace(*sum, v);
        else
            sum = v;
    };
    for (uint16_t q : slot.contributors) {
        if (q == member) continue;
        bool found = false;
        for (const TranscriptEntry& e : t)
            if (!e.outgoing && e.msg.kind == MsgKind::Partial && key_matches(e.msg, key) &&
                e.msg.sender == q) {
                add(e.msg.payload);
                found = true;
                break;
            }
        if (!found) return std::nullopt;
    }
    if (contributes) {
        // Own partial: echoed on the wire in all-to-all mode, otherwise
        // rebuilt from the member's input and the shares it exchanged.
        const TranscriptEntry* sent = nullptr;
        for (const TranscriptEntry& e : t)
            if (e.outgoing && e.msg.kind == MsgKind::Partial && key_matches(e.msg, key)) {
                sent = &e;
                break;
            }
        if (sent) {
            add(sent->msg.payload);
        } else {
            if (!own_input) return std::nullopt;
            RingVec partial = *own_input;
            for (const TranscriptEntry& e : t)
                if (e.msg.kind == MsgKind::Share && key_matches(e.msg, key)) {
                    if (e.outgoing)
                        ring_sub_inplace(partial, e.msg.payload);
                    else
                        ring_add_inplace(partial, e.msg.payload);
                }
            add(partial);
        }
    }
    return sum;
}

// Honest share payload bytes, each wire message counted once even when
// several coalition transcripts record it. Partials are excluded: the
// partials a coalition observes sum (in the ring) to a total it can
// derive anyway, so pooling them injects a linear dependency that
// reads as non-uniformity when the masking is in fact sound.
std::vector<uint8_t> honest_payload_bytes(const AdversaryView& v) {
    std::set<std::tuple<uint32_t, uint8_t, uint16_t, uint16_t, uint16_t>> seen;
    std::vector<uint8_t> bytes;
    for (const auto& [member, t] : v.observed)
        for (const TranscriptEntry& e : t) {
            if (e.outgoing || e.msg.kind != MsgKind::Share) continue;
            if (is_member(v.coalition, e.msg.sender)) continue;
            if (!seen.emplace(e.msg.round, e.msg.layer_tag, e.msg.group_tag, e.msg.sender,
                              e.msg.recipient)
                     .second)
                continue;
            for (uint32_t w : e.msg.payload)
                for (int b = 0; b < 4; ++b) bytes.push_back(uint8_t(w >> (8 * b)));
        }
    return bytes;
}

using MsgShape = std::tuple<uint32_t, uint8_t, uint16_t, MsgKind, uint16_t, uint16_t, bool,
                            size_t>;

std::vector<MsgShape> transcript_shape(const Transcript& t) {
    std::vector<MsgShape> out;
    out.reserve(t.size());
    for (const TranscriptEntry& e : t)
        out.emplace_back(e.msg.round, e.msg.layer_tag, e.msg.group_tag, e.msg.kind, e.msg.sender,
                         e.msg.recipient, e.outgoing, e.msg.payload.size());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

AdversaryView capture_view(const std::map<uint16_t, Transcript>& transcripts,
                           const Coalition& coalition, const SessionShape& shape,
                           const MemberInputs& inputs) {
    std::vector<uint16_t> members = coalition.members;
    std::sort(members.begin(), members.end());
    for (uint16_t m : members)
        if (!std::binary_search(shape.roster.begin(), shape.roster.end(), m))
            throw std::invalid_argument("coalition member " + std::to_string(m) +
                                        " is not on the roster");

    std::set<uint16_t> contributors = contributor_set(shape);
    size_t t = 0;
    for (uint16_t m : members) t += contributors.count(m);
    if (t + 2 > contributors.size())
        throw std::invalid_argument("coalition of " + std::to_string(t) + " exceeds the " +
                                    std::to_string(contributors.size()) +
                                    "-participant threshold t <= m-2");

    AdversaryView v;
    v.coalition.members = members;
    v.coalition.includes_aggregator =
        shape.cfg.topology == Topology::Aggregator &&
        std::binary_search(members.begin(), members.end(), shape.cfg.aggregator);
    v.rounds = shape.rounds;
    for (uint16_t m : members) v.observed[m] = transcripts.at(m);

    for (const auto& [key, per_member] : inputs) {
        for (const auto& [id, vec] : per_member)
            if (!std::binary_search(members.begin(), members.end(), id))
                throw std::invalid_argument("input supplied for non-member " + std::to_string(id));
        v.inputs[key] = per_member;
    }

    for (uint32_t round = 1; round <= shape.rounds; ++round)
        for (const SumSlot& slot : shape.slots) {
            SlotKey key{round, slot.layer_tag, slot.group_tag};
            for (uint16_t m : members) {
                const RingVec* own = nullptr;
                auto ki = v.inputs.find(key);
                if (ki != v.inputs.end()) {
                    auto mi = ki->second.find(m);
                    if (mi != ki->second.end()) own = &mi->second;
                }
                std::optional<RingVec> total =
                    member_total(v.observed.at(m), m, slot, key, shape, own);
                if (!total) continue;
                v.totals[key] = *total;
                RingVec honest = *total;
                if (ki != v.inputs.end())
                    for (const auto& [id, vec] : ki->second)
                        if (std::binary_search(slot.contributors.begin(), slot.contributors.end(),
                                               id))
                            ring_sub_inplace(honest, vec);
                v.honest_sums[key] = std::move(honest);
                break;
            }
        }
    return v;
}

AdversaryView simulate_view(const Coalition& coalition, const SessionShape& shape,
                            const MemberInputs& inputs,
                            const std::map<SlotKey, RingVec>& honest_sums, uint64_t sim_seed) {
    std::vector<uint16_t> members = coalition.members;
    std::sort(members.begin(), members.end());

    LocalBus bus(shape.roster, /*record=*/true);
    for (uint32_t round = 1; round <= shape.rounds; ++round) {
        std::map<uint16_t, RingSlotInputs> ring_in;
        for (uint16_t id : shape.roster) ring_in[id].resize(shape.slots.size());

        for (size_t s = 0; s < shape.slots.size(); ++s) {
            const SumSlot& slot = shape.slots[s];
            SlotKey key{round, slot.layer_tag, slot.group_tag};

            std::vector<uint16_t> honest;
            for (uint16_t q : slot.contributors) {
                if (std::binary_search(members.begin(), members.end(), q))
                    ring_in[q][s] = inputs.at(key).at(q);
                else
                    honest.push_back(q);
            }
            if (honest.empty()) continue;  // member-only slot, nothing to fabricate

            auto zi = honest_sums.find(key);
            if (zi == honest_sums.end())
                throw std::invalid_argument("no honest sum supplied for round " +
                                            std::to_string(round));
            size_t dim = zi->second.size();
            for (uint16_t q : slot.contributors)
                if (ring_in[q][s] && ring_in[q][s]->size() != dim)
                    throw std::invalid_argument("member input dimension mismatch");

            // Uniform dummies, last one pinned so the honest portion sums to z.
            RingVec remaining = zi->second;
            std::uniform_int_distribution<uint32_t> dist;
            for (size_t h = 0; h + 1 < honest.size(); ++h) {
                auto rng = substream(sim_seed, honest[h], round, kDummySalt);
                RingVec dummy(dim);
                for (uint32_t& x : dummy) x = dist(rng);
                ring_sub_inplace(remaining, dummy);
                ring_in[honest[h]][s] = std::move(dummy);
            }
            ring_in[honest.back()][s] = std::move(remaining);
        }
        run_round_local_ring(bus, shape.cfg, round, shape.slots, ring_in);
    }

    std::map<uint16_t, Transcript> transcripts;
    for (uint16_t m : members) transcripts[m] = bus.endpoint(m).transcript();
    return capture_view(transcripts, coalition, shape, inputs);
}

double chi_square_bytes(const std::vector<uint8_t>& bytes) {
    if (bytes.empty()) return 0.0;
    std::array<double, 256> counts{};
    for (uint8_t b : bytes) counts[b] += 1.0;
    double expected = double(bytes.size()) / 256.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    return chi2;
}

IndistinguishabilityReport views_indistinguishable(const AdversaryView& real,
                                                   const AdversaryView& sim) {
    IndistinguishabilityReport rep;
    std::ostringstream detail;

    rep.structure_ok = real.coalition.members == sim.coalition.members &&
                       real.rounds == sim.rounds;
    if (!rep.structure_ok) detail << "coalition or round count differs\n";
    if (rep.structure_ok)
        for (uint16_t m : real.coalition.members) {
            auto ri = real.observed.find(m);
            auto si = sim.observed.find(m);
            if (si == sim.observed.end() ||
                transcript_shape(ri->second) != transcript_shape(si->second)) {
                rep.structure_ok = false;
                detail << "message structure differs for member " << m << "\n";
                break;
            }
        }

    rep.aggregates_equal = real.totals == sim.totals && real.honest_sums == sim.honest_sums;
    if (!rep.aggregates_equal) detail << "derivable aggregates differ\n";

    std::vector<uint8_t> rb = honest_payload_bytes(real);
    std::vector<uint8_t> sb = honest_payload_bytes(sim);
    rep.real_share_bytes = rb.size();
    rep.sim_share_bytes = sb.size();
    rep.real_chi2 = chi_square_bytes(rb);
    rep.sim_chi2 = chi_square_bytes(sb);
    rep.real_shares_uniform = rb.size() >= kMinUniformityBytes &&
                              rep.real_chi2 <= kChiSquare255At01;
    rep.sim_shares_uniform = sb.size() >= kMinUniformityBytes &&
                             rep.sim_chi2 <= kChiSquare255At01;
    detail << "real view: " << rb.size() << " honest payload bytes, chi2 " << rep.real_chi2
           << (rep.real_shares_uniform ? " (uniform)\n" : " (NOT uniform)\n");
    detail << "simulated view: " << sb.size() << " honest payload bytes, chi2 " << rep.sim_chi2
           << (rep.sim_shares_uniform ? " (uniform)\n" : " (NOT uniform)\n");

    rep.indistinguishable = rep.structure_ok && rep.aggregates_equal && rep.real_shares_uniform &&
                            rep.sim_shares_uniform;
    detail << "verdict: " << (rep.indistinguishable ? "indistinguishable" : "DISTINGUISHABLE")
           << "\n";
    rep.detail = detail.str();
    return rep;
}

std::vector<std::pair<Matrix, Matrix>> model_broadcast_observations(const Transcript& transcript,
                                                                    const FixedPointCodec& codec,
                                                                    const RateSchedule& schedule) {
    std::map<uint32_t, RingVec> per_round;
    for (const TranscriptEntry& e : transcript) {
        if (e.msg.kind == MsgKind::Barrier || e.msg.group_tag != kModelBroadcastTag) continue;
        if (e.msg.layer_tag != 1) continue;  // the extractor targets linear models
        per_round.emplace(e.msg.round, e.msg.payload);
    }

    std::vector<std::pair<Matrix, Matrix>> obs;
    for (auto it = per_round.begin(); it != per_round.end(); ++it) {
        auto next = std::next(it);
        if (next == per_round.end() || next->first != it->first + 1) continue;
        std::vector<double> w = codec.decode(it->second);
        std::vector<double> w1 = codec.decode(next->second);
        double alpha = rate_at(schedule, it->first);
        Matrix wk = Eigen::Map<const Matrix>(w.data(), Eigen::Index(w.size()), 1);
        Matrix sk(wk.rows(), 1);
        for (Eigen::Index i = 0; i < sk.rows(); ++i) sk(i, 0) = (w[size_t(i)] - w1[size_t(i)]) / alpha;
        obs.emplace_back(std::move(wk), std::move(sk));
    }
    return obs;
}

LinregLeak leakage_extract_linreg(const std::vector<std::pair<Matrix, Matrix>>& observations) {
    if (observations.empty())
        throw PrivacyError("no model observations in the view; nothing to extract");
    Eigen::Index d = observations[0].first.rows();
    if (Eigen::Index(observations.size()) < d + 1)
        throw PrivacyError("need at least " + std::to_string(d + 1) + " observations, got " +
                           std::to_string(observations.size()));

    Matrix M(Eigen::Index(observations.size()), d + 1);
    Matrix B(Eigen::Index(observations.size()), d);
    for (size_t k = 0; k < observations.size(); ++k) {
        const auto& [w, s] = observations[k];
        if (w.rows() != d || w.cols() != 1 || s.rows() != d || s.cols() != 1)
            throw std::invalid_argument("observation " + std::to_string(k) + " has a bad shape");
        M.row(Eigen::Index(k)) << w.transpose(), -1.0;
        B.row(Eigen::Index(k)) = s.transpose();
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    if (qr.rank() < d + 1)
        throw PrivacyError("observed models are affinely dependent; the system is rank-deficient");
    Matrix theta = qr.solve(B);  // column i solves for row i of the Gram matrix

    LinregLeak leak;
    leak.xtx = theta.topRows(d).transpose();
    leak.xty = theta.row(d).transpose();
    return leak;
}

}  // namespace cgd
