#pragma once

// Secure-sum rounds over the transport. One round may batch several sum
// slots (e.g. one per network layer or per feature group); all participants
// walk the same four phases in lockstep:
//
//   send_shares       each contributor splits its encoded input among the
//                     slot's contributors (own share kept locally)
//   exchange_partials each contributor sums the shares it holds and sends
//                     the partial to the reconstructors for its slots
//   reconstruct       AllToAll: every delivery member sums the partials it
//                     received. Aggregator: the aggregator sums and fans out
//                     RESULT messages to the delivery set.
//   collect           Aggregator only: delivery members take their RESULT
//   barrier_send /    everyone signals end-of-round to everyone, then waits
//   barrier_wait      for the same signal back
//
// Each phase only receives messages sent in earlier phases, so the phases
// can be driven sequentially across participants on an in-process bus
// (run_round_local); on TCP each participant runs run_round on its own
// thread and the blocking receives provide the synchronization.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "cgd/ring.hpp"
#include "cgd/transport.hpp"

namespace cgd {

enum class Topology { AllToAll, Aggregator };

struct SessionConfig {
    Topology topology = Topology::AllToAll;
    uint16_t aggregator = 0;          // used when topology == Aggregator
    FixedPointCodec codec{};
    uint64_t seed = 1;
};

struct SumSlot {
    uint8_t layer_tag = 1;
    uint16_t group_tag = 0;               // 0 = global
    std::vector<uint16_t> contributors;   // ascending ids
    std::vector<uint16_t> delivery;       // ascending ids
};

// Entry i set iff this participant contributes to / receives from slot i.
using SlotInputs = std::vector<std::optional<std::vector<double>>>;
using SlotResults = std::vector<std::optional<std::vector<double>>>;
// Same, but already in the ring domain (codec encode is skipped).
using RingSlotInputs = std::vector<std::optional<RingVec>>;

class SumRound {
  public:
    SumRound(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
             const std::vector<SumSlot>& slots, SlotInputs inputs,
             const std::vector<uint16_t>& all_ids);
    SumRound(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
             const std::vector<SumSlot>& slots, RingSlotInputs inputs,
             const std::vector<uint16_t>& all_ids);

    void send_shares();
    void exchange_partials();
    void reconstruct();
    void collect();
    void barrier_send();
    void barrier_wait();

    const SlotResults& results() const { return results_; }
    uint64_t clipped() const { return clipped_; }

  private:
    bool contributes(size_t s) const;
    bool receives(size_t s) const;
    bool solo(size_t s) const;

    RingVec encoded_input(size_t s);

    Endpoint& ep_;
    const SessionConfig& cfg_;
    uint32_t round_;
    const std::vector<SumSlot>& slots_;
    SlotInputs inputs_;
    RingSlotInputs ring_inputs_;
    std::vector<uint16_t> all_ids_;
    std::vector<RingVec> self_share_;
    std::vector<RingVec> partial_;
    SlotResults results_;
    uint64_t clipped_ = 0;
};

// Single-participant round on the calling thread (all four phases).
SlotResults run_round(Endpoint& ep, const SessionConfig& cfg, uint32_t round,
                      const std::vector<SumSlot>& slots, SlotInputs inputs,
                      const std::vector<uint16_t>& all_ids, uint64_t* clipped = nullptr);

// Drives every registered participant through the round on an in-process bus.
std::map<uint16_t, SlotResults> run_round_local(Bus& bus, const SessionConfig& cfg, uint32_t round,
                                                const std::vector<SumSlot>& slots,
                                                const std::map<uint16_t, SlotInputs>& inputs,
                                                uint64_t* clipped = nullptr);

// Ring-domain variant: inputs are pre-encoded, so values outside the codec's
// clipping range survive intact (used to replay rounds with synthetic inputs).
std::map<uint16_t, SlotResults> run_round_local_ring(
    Bus& bus, const SessionConfig& cfg, uint32_t round, const std::vector<SumSlot>& slots,
    const std::map<uint16_t, RingSlotInputs>& inputs);

// Convenience: one global sum of one vector per participant, delivered to all.
// Returns the common result.
std::vector<double> secure_sum(Bus& bus, const SessionConfig& cfg, uint32_t round,
                               const std::map<uint16_t, std::vector<double>>& inputs);

// Transport-independent seam the trainers drive rounds through.
class RoundExecutor {
  public:
    virtual ~RoundExecutor() = default;
    virtual std::map<uint16_t, SlotResults> execute(uint32_t round,
                                                    const std::vector<SumSlot>& slots,
                                                    const std::map<uint16_t, SlotInputs>& inputs) = 0;
    virtual std::vector<uint16_t> ids() const = 0;
    virtual std::map<uint16_t, Transcript> transcripts() const = 0;
    virtual uint64_t clipped() const = 0;
};

class LocalExecutor : public RoundExecutor {
  public:
    LocalExecutor(const std::vector<uint16_t>& participant_ids, const SessionConfig& cfg,
                  bool record = false);

    std::map<uint16_t, SlotResults> execute(uint32_t round, const std::vector<SumSlot>& slots,
                                            const std::map<uint16_t, SlotInputs>& inputs) override;
    std::vector<uint16_t> ids() const override { return bus_.ids(); }
    std::map<uint16_t, Transcript> transcripts() const override;
    uint64_t clipped() const override { return clipped_; }

    LocalBus& bus() { return bus_; }

  private:
    LocalBus bus_;
    SessionConfig cfg_;
    uint64_t clipped_ = 0;
};

}  // namespace cgd
