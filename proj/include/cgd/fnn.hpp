#pragma once

// Round mechanics for a fully connected net over an m_h x m_v partition
// grid. Forward and backward passes are entirely local to each participant
// (a participant only ever sees its own feature slice); what crosses the
// transport is one secure sum per upper layer over all participants, plus
// one first-layer sum per vertical group, delivered only to that group.

#include <cstdint>
#include <vector>

#include "cgd/data_plane.hpp"
#include "cgd/engine.hpp"
#include "cgd/linalg.hpp"
#include "cgd/secure_sum.hpp"

namespace cgd {

struct GridId {
    size_t i = 0;  // horizontal (sample) index, < m_h
    size_t j = 0;  // vertical (feature) index, < m_v

    bool operator==(const GridId&) const = default;
};

uint16_t grid_to_id(const GridId& g, size_t m_v);
GridId id_to_grid(uint16_t id, size_t m_v);

// First layer maps the participant's slice width to hidden[0]; the rest of
// the chain is shared across the grid.
std::vector<LayerShape> layer_shapes_for(Eigen::Index slice_width,
                                         const std::vector<Eigen::Index>& hidden,
                                         Eigen::Index outputs);

// Local passes over the participant's own shard. Thin wrappers that pin the
// loss-determined activations and validate the slice shape.
ForwardPass forward_local(const Shard& shard, const ConfinedModel& model, LossKind loss);
std::vector<Matrix> backward_local(const Shard& shard, const ConfinedModel& model, LossKind loss);

// The batched slot plan for one iteration: layers N..2 as global sums
// (group_tag 0), then one layer-1 slot per vertical group j with group_tag
// j+1, contributors and delivery both the group's column.
std::vector<SumSlot> gradient_slots(const PartitionPlan& plan, size_t n_layers);

// Flattens a participant's per-layer gradients into the slot order above.
SlotInputs bundle_inputs(const std::vector<Matrix>& grads, const GridId& g,
                         const PartitionPlan& plan);

// Applies w -= alpha * sum using the participant's delivered slots.
void descend_round(ConfinedModel& model, const SlotResults& results, const GridId& g,
                   const PartitionPlan& plan, double alpha);

// Assembled prediction of grid row i on full-width inputs; models indexed by
// participant id. See CgdSession::assembled_prediction.
Matrix grid_predict(const std::vector<ConfinedModel>& models, const PartitionPlan& plan,
                    size_t row_i, const Matrix& x_full, LossKind loss);

}  // namespace cgd
