#include "cgd/fnn.hpp"

#include <string>

namespace cgd {

namespace {

std::vector<double> flatten(const Matrix& m) {
    return {m.data(), m.data() + m.size()};  // row-major contiguous
}

Matrix unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
    if (Eigen::Index(v.size()) != rows * cols)
        throw ProtocolError("sum payload has " + std::to_string(v.size()) +
                            " entries, expected " + std::to_string(rows * cols));
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace

uint16_t grid_to_id(const GridId& g, size_t m_v) { return uint16_t(g.i * m_v + g.j); }

GridId id_to_grid(uint16_t id, size_t m_v) { return {id / m_v, id % m_v}; }

std::vector<LayerShape> layer_shapes_for(Eigen::Index slice_width,
                                         const std::vector<Eigen::Index>& hidden,
                                         Eigen::Index outputs) {
    if (slice_width < 1 || outputs < 1) throw std::invalid_argument("bad layer widths");
    std::vector<LayerShape> shapes;
    Eigen::Index in = slice_width;
    for (Eigen::Index h : hidden) {
        if (h < 1) throw std::invalid_argument("bad hidden width");
        shapes.push_back({in, h});
        in = h;
    }
    shapes.push_back({in, outputs});
    return shapes;
}

ForwardPass forward_local(const Shard& shard, const ConfinedModel& model, LossKind loss) {
    return forward_fc(shard.x, model.layers, activations_for(model.layers.size(), loss));
}

std::vector<Matrix> backward_local(const Shard& shard, const ConfinedModel& model, LossKind loss) {
    return local_gradient(shard.x, shard.y, model.layers, loss);
}

std::vector<SumSlot> gradient_slots(const PartitionPlan& plan, size_t n_layers) {
    if (n_layers < 1) throw std::invalid_argument("need at least one layer");
    std::vector<uint16_t> everyone;
    for (size_t i = 0; i < plan.m_h; ++i)
        for (size_t j = 0; j < plan.m_v; ++j) everyone.push_back(grid_to_id({i, j}, plan.m_v));

    std::vector<SumSlot> slots;
    for (size_t r = n_layers; r >= 2; --r)
        slots.push_back({uint8_t(r), 0, everyone, everyone});
    for (size_t j = 0; j < plan.m_v; ++j) {
        std::vector<uint16_t> column;
        for (size_t i = 0; i < plan.m_h; ++i) column.push_back(grid_to_id({i, j}, plan.m_v));
        slots.push_back({1, uint16_t(j + 1), column, column});
    }
    return slots;
}

SlotInputs bundle_inputs(const std::vector<Matrix>& grads, const GridId& g,
                         const PartitionPlan& plan) {
    size_t n_layers = grads.size();
    SlotInputs inputs(n_layers - 1 + plan.m_v);
    for (size_t r = n_layers; r >= 2; --r) inputs[n_layers - r] = flatten(grads[r - 1]);
    inputs[n_layers - 1 + g.j] = flatten(grads[0]);
    return inputs;
}

void descend_round(ConfinedModel& model, const SlotResults& results, const GridId& g,
                   const PartitionPlan& plan, double alpha) {
    size_t n_layers = model.layers.size();
    if (results.size() != n_layers - 1 + plan.m_v)
        throw ProtocolError("slot count does not match the model depth");
    for (size_t r = n_layers; r >= 2; --r) {
        const auto& sum = results[n_layers - r];
        if (!sum) throw ProtocolError("missing global sum for layer " + std::to_string(r));
        model.layers[r - 1] -=
            alpha * unflatten(*sum, model.layers[r - 1].rows(), model.layers[r - 1].cols());
    }
    const auto& group = results[n_layers - 1 + g.j];
    if (!group) throw ProtocolError("missing first-layer sum for group " + std::to_string(g.j));
    model.layers[0] -= alpha * unflatten(*group, model.layers[0].rows(), model.layers[0].cols());
}

Matrix grid_predict(const std::vector<ConfinedModel>& models, const PartitionPlan& plan,
                    size_t row_i, const Matrix& x_full, LossKind loss) {
    if (row_i >= plan.m_h) throw std::invalid_argument("grid row out of range");
    if (models.size() != plan.m_h * plan.m_v)
        throw std::invalid_argument("one model per grid cell required");

    Matrix z_final;
    for (size_t j = 0; j < plan.m_v; ++j) {
        const ConfinedModel& m = models[grid_to_id({row_i, j}, plan.m_v)];
        const RowRange& cr = plan.feature_ranges[j];
        Matrix a = x_full.middleCols(cr.begin, cr.size());
        auto acts = activations_for(m.layers.size(), loss);
        for (size_t r = 0; r + 1 < m.layers.size(); ++r)
            a = apply_activation((a * m.layers[r]).eval(), acts[r]);
        Matrix z = a * m.layers.back();
        if (j == 0)
            z_final = std::move(z);
        else
            z_final += z;
    }
    return apply_activation(
        z_final, loss == LossKind::CrossEntropySoftmax ? Activation::Softmax : Activation::Identity);
}

}  // namespace cgd
