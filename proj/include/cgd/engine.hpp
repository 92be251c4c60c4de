#pragma once

// Confined gradient descent. Every participant keeps its own private model;
// one training iteration computes local full-batch gradients, securely sums
// them (globally for the upper layers, per vertical feature group for the
// first layer), and applies the identical summed step to every confined
// model. Model weights never leave their owner: only gradient shares and
// reconstructed sums cross the transport.

#include <cstdint>
#include <limits>
#include <vector>

#include "cgd/data_plane.hpp"
#include "cgd/linalg.hpp"
#include "cgd/secure_sum.hpp"

namespace cgd {

class ProtocolError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ConfinedModel {
    uint16_t owner = 0;
    std::vector<Matrix> layers;
};

struct LayerShape {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
};

struct InitPolicy {
    double delta = 0.1;  // weight scale; entries are delta * N(0,1)
    uint64_t seed = 1;
};

// Each owner draws from its own substream of policy.seed, so participants
// sharing a seed still start from independent weights.
ConfinedModel init_confined(uint16_t owner, const InitPolicy& policy,
                            const std::vector<LayerShape>& shapes);

struct RateSchedule {
    enum class Mode { Fixed, Diminishing };

    Mode mode = Mode::Fixed;
    double alpha = 0.01;
    double mu = 0.0;  // Diminishing only, in (0,1)
    uint32_t T = 0;   // Diminishing only

    static RateSchedule fixed(double alpha);
    // alpha / (k + mu*T)^2 for k in [1, T].
    static RateSchedule diminishing(double alpha, double mu, uint32_t T);
};

double rate_at(const RateSchedule& s, uint32_t k);

// w - alpha_k * summed, layer by layer. The local gradient feeds the secure
// sum only; it is never applied on its own.
ConfinedModel cgd_step(const ConfinedModel& model, const std::vector<Matrix>& summed_grad,
                       double alpha_k);

struct RegretTrace {
    std::vector<double> losses;  // designated participant's loss per iteration
    double reference = std::numeric_limits<double>::quiet_NaN();  // loss of the centralized optimum
};

// (1/T) * sum_k (losses[k] - reference).
double regret(const RegretTrace& trace);

// m * ||mean over j of (w_1^ref - w_1^j)||_2, flattened across layers. All
// models must share shapes (so per-group first layers of a vertical grid do
// not qualify).
double epsilon_bound(const std::vector<ConfinedModel>& initial, size_t reference);

struct CgdConfig {
    PartitionPlan plan;                 // grid geometry over the training set
    std::vector<Eigen::Index> hidden;   // hidden widths; empty = linear model
    Eigen::Index outputs = 1;
    LossKind loss = LossKind::MeanSquaredError;
    RateSchedule schedule = RateSchedule::fixed(0.01);
    double delta = 0.1;
    std::vector<double> delta_per;  // per-participant init scales; empty = delta everywhere
    uint64_t seed = 1;
    bool identical_init = false;  // all participants start from the same draw
};

// One training session over a round executor. Participant ids are assigned
// row-major over the grid: id(i,j) = i*m_v + j.
class CgdSession {
  public:
    CgdSession(RoundExecutor& ex, const Dataset& train, CgdConfig cfg);

    // One synchronized iteration; k advances by 1. Transport failures abort
    // with the round index attached.
    void step();

    uint32_t iteration() const { return k_; }
    size_t participants() const { return models_.size(); }
    const CgdConfig& config() const { return cfg_; }
    const std::vector<ConfinedModel>& models() const { return models_; }
    const ConfinedModel& model(uint16_t id) const { return models_.at(id); }

    // Joint prediction of grid row i on full-width inputs: each vertical
    // slice runs through its owner's confined stack and the final-layer
    // pre-activations are summed before the output activation. Reduces to
    // the participant's own model when m_v = 1.
    Matrix assembled_prediction(size_t row_i, const Matrix& x_full) const;

    // Training-set loss of the participant's assembled prediction.
    double participant_loss(uint16_t id) const;

  private:
    RoundExecutor& ex_;
    CgdConfig cfg_;
    Dataset train_;
    std::vector<std::vector<Shard>> shards_;
    std::vector<ConfinedModel> models_;
    std::vector<SumSlot> slots_;
    uint32_t k_ = 0;
};

struct CgdResult {
    std::vector<ConfinedModel> models;
    RegretTrace trace;
};

// Runs T iterations, recording the designated participant's training loss
// each round. `f_reference` seeds the trace's reference loss.
CgdResult run_cgd(RoundExecutor& ex, const Dataset& train, const CgdConfig& cfg, uint32_t T,
                  uint16_t designated = 0,
                  double f_reference = std::numeric_limits<double>::quiet_NaN());

}  // namespace cgd
