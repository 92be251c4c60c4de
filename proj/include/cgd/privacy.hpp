#pragma once

// Post-hoc adversary analysis over recorded transcripts: what a coalition of
// honest-but-curious participants can observe, the dummy-input simulator the
// privacy argument rests on, an indistinguishability checker for the two,
// and the Gram-matrix extractor that works against traditional federated
// SGD (and structurally cannot run against confined training).

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cgd/engine.hpp"
#include "cgd/linalg.hpp"
#include "cgd/secure_sum.hpp"

namespace cgd {

class PrivacyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Identifies one sum slot of one round across a whole run.
struct SlotKey {
    uint32_t round = 0;
    uint8_t layer_tag = 0;
    uint16_t group_tag = 0;

    auto operator<=>(const SlotKey&) const = default;
};

// The corrupted set. Members collude: everything any member sends, receives
// or knows is pooled. includes_aggregator is derived at capture time.
struct Coalition {
    std::vector<uint16_t> members;  // ascending
    bool includes_aggregator = false;
};

// Static description of a recorded run: the session parameters, the slot
// plan (repeated every round), the bus roster and the round count.
struct SessionShape {
    SessionConfig cfg;
    std::vector<SumSlot> slots;
    std::vector<uint16_t> roster;
    uint32_t rounds = 0;
};

// Per-slot member contributions in the ring domain, as the members
// themselves know them.
using MemberInputs = std::map<SlotKey, std::map<uint16_t, RingVec>>;

struct AdversaryView {
    Coalition coalition;
    uint32_t rounds = 0;
    std::map<uint16_t, Transcript> observed;  // per member, delivery-rule filtered
    MemberInputs inputs;
    // Everything the coalition can reconstruct: full slot sums, and those
    // sums with the members' own contributions removed.
    std::map<SlotKey, RingVec> totals;
    std::map<SlotKey, RingVec> honest_sums;
};

// Pools the members' transcripts and derives every reconstructable
// aggregate. Throws when more than m-2 of the contributing participants are
// corrupted (m-1 corruptions expose the last input by subtraction).
AdversaryView capture_view(const std::map<uint16_t, Transcript>& transcripts,
                           const Coalition& coalition, const SessionShape& shape,
                           const MemberInputs& inputs);

// Re-runs the real protocol with the members' true inputs and uniform dummy
// inputs for the honest parties, constrained so each slot's honest portion
// ring-sums to honest_sums[key]. Returns the coalition view of that run.
AdversaryView simulate_view(const Coalition& coalition, const SessionShape& shape,
                            const MemberInputs& inputs,
                            const std::map<SlotKey, RingVec>& honest_sums, uint64_t sim_seed);

// Pearson chi-square statistic of byte frequencies against uniform, 255
// degrees of freedom. kChiSquare255At01 is the 0.01 upper critical value.
double chi_square_bytes(const std::vector<uint8_t>& bytes);
inline constexpr double kChiSquare255At01 = 310.457;
inline constexpr size_t kMinUniformityBytes = 1280;  // expected count >= 5 per bin

struct IndistinguishabilityReport {
    bool structure_ok = false;       // same message counts/shapes per member
    bool aggregates_equal = false;   // totals and honest sums match exactly
    bool real_shares_uniform = false;
    bool sim_shares_uniform = false;
    bool indistinguishable = false;
    double real_chi2 = 0.0;
    double sim_chi2 = 0.0;
    size_t real_share_bytes = 0;
    size_t sim_share_bytes = 0;
    std::string detail;  // human-readable breakdown, one finding per line
};

// Operational stand-in for distributional equality: coalition-derivable
// aggregates must match exactly, while the honest parties' individual
// share and partial payloads must look uniform in both views (per-byte
// chi-square at significance 0.01). Undersized samples fail closed.
IndistinguishabilityReport views_indistinguishable(const AdversaryView& real,
                                                   const AdversaryView& sim);

// (w_k, aggregated gradient at w_k) pairs recovered from one observer's
// transcript of a run that broadcasts its model under kModelBroadcastTag:
// s_k = (w_k - w_{k+1}) / alpha_k. Transcripts without model broadcasts
// (confined training) yield an empty list.
std::vector<std::pair<Matrix, Matrix>> model_broadcast_observations(const Transcript& transcript,
                                                                    const FixedPointCodec& codec,
                                                                    const RateSchedule& schedule);

struct LinregLeak {
    Matrix xtx;  // d x d
    Matrix xty;  // d x 1
};

// Fits the affine map s(w) = (X^T X) w - X^T y to the observations by least
// squares. Needs at least d+1 pairs with affinely independent w; otherwise
// throws PrivacyError (which is the structural failure on confined runs,
// where no model observations exist at all).
LinregLeak leakage_extract_linreg(const std::vector<std::pair<Matrix, Matrix>>& observations);

}  // namespace cgd
