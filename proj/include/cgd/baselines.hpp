#pragma once

// Reference trainers the confined protocol is measured against: centralized
// batch gradient descent, isolated per-shard training, and federated SGD
// around a single shared model (in plain and secure-aggregation flavours).

#include <cstdint>
#include <functional>
#include <vector>

#include "cgd/data_plane.hpp"
#include "cgd/engine.hpp"
#include "cgd/linalg.hpp"
#include "cgd/secure_sum.hpp"

namespace cgd {

// Fired after each update with the iteration index and the stepped weights;
// lets callers evaluate intermediate models without owning the loop.
using IterObserver = std::function<void(uint32_t, const std::vector<Matrix>&)>;
using LocalIterObserver = std::function<void(uint16_t, uint32_t, const std::vector<Matrix>&)>;

// Federated SGD broadcasts the shared model under this group tag, so the
// current weights are literally on the wire each round. Regular group tags
// stop at m_v, far below this.
inline constexpr uint16_t kModelBroadcastTag = 0xFFFF;

struct TrainTrace {
    std::vector<double> losses;  // training loss of w_{k-1}, one entry per iteration
    std::vector<double> accs;    // training accuracy alongside; empty for squared error
};

struct CentralizedResult {
    std::vector<Matrix> layers;
    TrainTrace trace;
};

// Full-batch descent on the whole dataset: w <- w - alpha_k * (1/n) dF.
// init_stream picks the init_confined substream (0 unless matching a
// specific participant's starting point).
CentralizedResult centralized_train(const Dataset& ds, const std::vector<Eigen::Index>& hidden,
                                    Eigen::Index outputs, LossKind loss,
                                    const RateSchedule& schedule, uint32_t T, double delta = 0.1,
                                    uint64_t seed = 1, uint16_t init_stream = 0,
                                    const IterObserver& on_iter = {});

struct LocalResult {
    std::vector<ConfinedModel> models;  // participant-id order, i*m_v + j
    std::vector<TrainTrace> traces;     // per participant, loss on its own shard
};

// Every participant runs centralized descent on its own shard and never
// communicates. Inits follow the participant's own substream, exactly as in
// the confined protocol.
LocalResult local_train(const Dataset& ds, const PartitionPlan& plan,
                        const std::vector<Eigen::Index>& hidden, Eigen::Index outputs,
                        LossKind loss, const RateSchedule& schedule, uint32_t T,
                        double delta = 0.1, uint64_t seed = 1,
                        const LocalIterObserver& on_iter = {});

// Predictions of a vertically sliced model on full-width inputs: the model
// sees only its own feature columns, which equals zero-padding the absent
// ones for the first-layer product.
Matrix slice_predict(const ConfinedModel& model, const PartitionPlan& plan, size_t col_j,
                     const Matrix& x_full, LossKind loss);

// How a participant's shard gradient enters the aggregate: the per-sample
// mean (the usual SGD step) or the raw per-sample sum, which makes the
// aggregate equal the gradient of the undivided dataset's summed loss.
enum class GradientScale { Mean, Sum };

struct FedsgdOptions {
    bool secure = false;   // share only the aggregated gradient, not each g^l
    size_t batch = 0;      // rows sampled per shard per round; 0 = full shard
    GradientScale scale = GradientScale::Mean;
    double delta = 0.1;
    uint64_t seed = 1;
};

struct FedsgdResult {
    std::vector<Matrix> layers;  // final shared model
    TrainTrace trace;            // full-dataset loss of w_{k-1} per round
};

// Traditional federated SGD over the executor: one shared model, updated by
// the sum of per-shard gradients. Plain mode puts each participant's g^l on
// the wire in clear; secure mode runs the same sum through secret sharing.
// Both broadcast the current model under kModelBroadcastTag first, since the
// shared model is public in this architecture. Horizontal partitions only.
FedsgdResult fedsgd_train(RoundExecutor& ex, const Dataset& ds, const PartitionPlan& plan,
                          const std::vector<Eigen::Index>& hidden, Eigen::Index outputs,
                          LossKind loss, const RateSchedule& schedule, uint32_t T,
                          const FedsgdOptions& opts = {}, const IterObserver& on_iter = {});

}  // namespace cgd
