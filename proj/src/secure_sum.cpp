#include "cgd/secure_sum.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cgd {

namespace {

bool contains(const std::vector<uint16_t>& v, uint16_t id) {
    return std::find(v.begin(), v.end(), id) != v.end();
}

}  // namespace

SumRound::SumRound(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
                   const std::vector<SumSlot>& slots, SlotInputs inputs,
                   const std::vector<uint16_t>& all_ids)
    : ep_(ep),
      cfg_(cfg),
      round_(round),
      slots_(slots),
      inputs_(std::move(inputs)),
      all_ids_(all_ids),
      self_share_(slots.size()),
      partial_(slots.size()),
      results_(slots.size()) {
    if (inputs_.size() != slots_.size())
        throw std::invalid_argument("inputs must be parallel to slots");
    for (size_t s = 0; s < slots_.size(); ++s) {
        if (slots_[s].contributors.empty())
            throw std::invalid_argument("slot without contributors");
        if (contributes(s) != inputs_[s].has_value())
            throw std::invalid_argument("input presence must match contributor role");
    }
}

SumRound::SumRound(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
                   const std::vector<SumSlot>& slots, RingSlotInputs inputs,
                   const std::vector<uint16_t>& all_ids)
    : ep_(ep),
      cfg_(cfg),
      round_(round),
      slots_(slots),
      ring_inputs_(std::move(inputs)),
      all_ids_(all_ids),
      self_share_(slots.size()),
      partial_(slots.size()),
      results_(slots.size()) {
    if (ring_inputs_.size() != slots_.size())
        throw std::invalid_argument("inputs must be parallel to slots");
    for (size_t s = 0; s < slots_.size(); ++s) {
        if (slots_[s].contributors.empty())
            throw std::invalid_argument("slot without contributors");
        if (contributes(s) != ring_inputs_[s].has_value())
            throw std::invalid_argument("input presence must match contributor role");
    }
}

RingVec SumRound::encoded_input(size_t s) {
    if (s < ring_inputs_.size() && ring_inputs_[s]) return *ring_inputs_[s];
    return cfg_.codec.encode(*inputs_[s], &clipped_);
}

bool SumRound::contributes(size_t s) const { return contains(slots_[s].contributors, ep_.id()); }

bool SumRound::receives(size_t s) const { return contains(slots_[s].delivery, ep_.id()); }

// A slot whose only contributor is also its only possible recipient never
// touches the transport, so its "sum" skips the ring codec and stays exact.
bool SumRound::solo(size_t s) const {
    const SumSlot& slot = slots_[s];
    return slot.contributors.size() == 1 && slot.delivery.size() <= 1 &&
           (slot.delivery.empty() || slot.delivery[0] == slot.contributors[0]);
}

void SumRound::send_shares() {
    auto rng = substream(cfg_.seed, ep_.id(), round_, 0x5AA5);
    for (size_t s = 0; s < slots_.size(); ++s) {
        if (!contributes(s) || solo(s)) continue;
        const SumSlot& slot = slots_[s];
        RingVec secret = encoded_input(s);
        ShareSet shares = share(secret, slot.contributors, rng);
        for (uint16_t q : slot.contributors) {
            if (q == ep_.id()) {
                self_share_[s] = std::move(shares.per_recipient.at(q));
            } else {
                ep_.send({MsgKind::Share, round_, slot.layer_tag, slot.group_tag, ep_.id(), q,
                          std::move(shares.per_recipient.at(q))});
            }
        }
    }
}

void SumRound::exchange_partials() {
    for (size_t s = 0; s < slots_.size(); ++s) {
        if (!contributes(s) || solo(s)) continue;
        const SumSlot& slot = slots_[s];
        partial_[s] = std::move(self_share_[s]);
        for (uint16_t q : slot.contributors) {
            if (q == ep_.id()) continue;
            WireMessage m =
                ep_.recv_match(MsgKind::Share, round_, slot.layer_tag, slot.group_tag, q);
            ring_add_inplace(partial_[s], m.payload);
        }
        if (cfg_.topology == Topology::AllToAll) {
            for (uint16_t d : slot.delivery) {
                if (d == ep_.id()) continue;
                ep_.send({MsgKind::Partial, round_, slot.layer_tag, slot.group_tag, ep_.id(), d,
                          partial_[s]});
            }
        } else if (ep_.id() != cfg_.aggregator) {
            ep_.send({MsgKind::Partial, round_, slot.layer_tag, slot.group_tag, ep_.id(),
                      cfg_.aggregator, partial_[s]});
        }
    }
}

void SumRound::reconstruct() {
    for (size_t s = 0; s < slots_.size(); ++s) {
        const SumSlot& slot = slots_[s];
        if (solo(s)) {
            if (contributes(s) && receives(s)) {
                results_[s] = s < inputs_.size() && inputs_[s] ? *inputs_[s]
                                                               : cfg_.codec.decode(*ring_inputs_[s]);
            }
            continue;
        }
        bool reconstructor = cfg_.topology == Topology::AllToAll ? receives(s)
                                                                 : ep_.id() == cfg_.aggregator;
        if (!reconstructor) continue;
        RingVec sum;
        bool seeded = false;
        if (contributes(s)) {
            sum = partial_[s];
            seeded = true;
        }
        for (uint16_t q : slot.contributors) {
            if (q == ep_.id()) continue;
            WireMessage m =
                ep_.recv_match(MsgKind::Partial, round_, slot.layer_tag, slot.group_tag, q);
            if (!seeded) {
                sum = std::move(m.payload);
                seeded = true;
            } else {
                ring_add_inplace(sum, m.payload);
            }
        }
        if (cfg_.topology == Topology::Aggregator) {
            for (uint16_t d : slot.delivery) {
                if (d == ep_.id()) continue;
                ep_.send(
                    {MsgKind::Result, round_, slot.layer_tag, slot.group_tag, ep_.id(), d, sum});
            }
        }
        if (receives(s)) results_[s] = cfg_.codec.decode(sum);
    }
}

void SumRound::collect() {
    if (cfg_.topology != Topology::Aggregator || ep_.id() == cfg_.aggregator) return;
    for (size_t s = 0; s < slots_.size(); ++s) {
        if (!receives(s) || solo(s)) continue;
        WireMessage m = ep_.recv_match(MsgKind::Result, round_, slots_[s].layer_tag,
                                       slots_[s].group_tag, cfg_.aggregator);
        results_[s] = cfg_.codec.decode(m.payload);
    }
}

void SumRound::barrier_send() {
    for (uint16_t q : all_ids_) {
        if (q == ep_.id()) continue;
        ep_.send({MsgKind::Barrier, round_, 0, 0, ep_.id(), q, {}});
    }
}

void SumRound::barrier_wait() {
    for (uint16_t q : all_ids_) {
        if (q == ep_.id()) continue;
        ep_.recv_match(MsgKind::Barrier, round_, 0, 0, q);
    }
}

SlotResults run_round(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
                      const std::vector<SumSlot>& slots, SlotInputs inputs,
                      const std::vector<uint16_t>& all_ids, uint64_t* clipped) {
    SumRound r(ep, cfg, round, slots, std::move(inputs), all_ids);
    r.send_shares();
    r.exchange_partials();
    r.reconstruct();
    r.collect();
    r.barrier_send();
    r.barrier_wait();
    if (clipped) *clipped += r.clipped();
    return r.results();
}

std::map<uint16_t, SlotResults> run_round_local(Bus& bus, const SessionConfig& cfg, uint32_t round,
                                                const std::vector<SumSlot>& slots,
                                                const std::map<uint16_t, SlotInputs>& inputs,
                                                uint64_t* clipped) {
    std::vector<uint16_t> ids = bus.ids();
    std::vector<std::unique_ptr<SumRound>> rounds;
    rounds.reserve(ids.size());
    for (uint16_t id : ids) {
        auto it = inputs.find(id);
        SlotInputs in;
        if (it != inputs.end())
            in = it->second;
        else
            in.resize(slots.size());
        rounds.push_back(
            std::make_unique<SumRound>(bus.endpoint(id), cfg, round, slots, std::move(in), ids));
    }
    for (auto& r : rounds) r->send_shares();
    for (auto& r : rounds) r->exchange_partials();
    for (auto& r : rounds) r->reconstruct();
    for (auto& r : rounds) r->collect();
    for (auto& r : rounds) r->barrier_send();
    for (auto& r : rounds) r->barrier_wait();

    std::map<uint16_t, SlotResults> out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (clipped) *clipped += rounds[i]->clipped();
        out[ids[i]] = rounds[i]->results();
    }
    return out;
}

std::map<uint16_t, SlotResults> run_round_local_ring(
    Bus& bus, const SessionConfig& cfg, uint32_t round, const std::vector<SumSlot>& slots,
    const std::map<uint16_t, RingSlotInputs>& inputs) {
    std::vector<uint16_t> ids = bus.ids();
    std::vector<std::unique_ptr<SumRound>> rounds;
    rounds.reserve(ids.size());
    for (uint16_t id : ids) {
        auto it = inputs.find(id);
        RingSlotInputs in;
        if (it != inputs.end())
            in = it->second;
        else
            in.resize(slots.size());
        rounds.push_back(
            std::make_unique<SumRound>(bus.endpoint(id), cfg, round, slots, std::move(in), ids));
    }
    for (auto& r : rounds) r->send_shares();
    for (auto& r : rounds) r->exchange_partials();
    for (auto& r : rounds) r->reconstruct();
    for (auto& r : rounds) r->collect();
    for (auto& r : rounds) r->barrier_send();
    for (auto& r : rounds) r->barrier_wait();

    std::map<uint16_t, SlotResults> out;
    for (size_t i = 0; i < ids.size(); ++i) out[ids[i]] = rounds[i]->results();
    return out;
}

std::vector<double> secure_sum(Bus& bus, const SessionConfig& cfg, uint32_t round,
                               const std::map<uint16_t, std::vector<double>>& inputs) {
    std::vector<uint16_t> ids = bus.ids();
    if (ids.empty()) throw std::invalid_argument("secure_sum: empty session");
    size_t dim = inputs.begin()->second.size();
    for (const auto& [id, v] : inputs)
        if (v.size() != dim) throw std::invalid_argument("secure_sum: dimension mismatch");

    SumSlot slot{1, 0, ids, ids};
    std::map<uint16_t, SlotInputs> in;
    for (uint16_t id : ids) {
        auto it = inputs.find(id);
        if (it == inputs.end()) throw std::invalid_argument("secure_sum: missing input");
        in[id] = {it->second};
    }
    auto results = run_round_local(bus, cfg, round, {slot}, in);
    const std::vector<double>& first = *results.begin()->second.at(0);
    for (const auto& [id, r] : results)
        if (*r.at(0) != first) throw TransportError("secure_sum: participants disagree");
    return first;
}

LocalExecutor::LocalExecutor(const std::vector<uint16_t>& participant_ids,
                             const SessionConfig& cfg, bool record)
    : bus_(participant_ids, record), cfg_(cfg) {}

std::map<uint16_t, SlotResults> LocalExecutor::execute(
    uint32_t round, const std::vector<SumSlot>& slots,
    const std::map<uint16_t, SlotInputs>& inputs) {
    return run_round_local(bus_, cfg_, round, slots, inputs, &clipped_);
}

std::map<uint16_t, Transcript> LocalExecutor::transcripts() const {
    std::map<uint16_t, Transcript> out;
    for (uint16_t id : bus_.ids()) out[id] = bus_.endpoint(id).transcript();
    return out;
}

}  // namespace cgd
