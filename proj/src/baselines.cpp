#include "cgd/baselines.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cgd/fnn.hpp"
#include "cgd/ring.hpp"

namespace cgd {

namespace {

constexpr uint32_t kBatchSalt = 0x0B47;

std::vector<double> flatten(const Matrix& m) {
    return {m.data(), m.data() + m.size()};  // row-major contiguous
}

Matrix unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
    if (Eigen::Index(v.size()) != rows * cols)
        throw ProtocolError("sum payload has " + std::to_string(v.size()) +
                            " entries, expected " + std::to_string(rows * cols));
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// Shared descent loop: records the loss (and accuracy, for classification)
// of the incoming weights each iteration, then steps in place.
TrainTrace descend(const Matrix& x, const Matrix& y, std::vector<Matrix>& layers, LossKind loss,
                   const RateSchedule& schedule, uint32_t T, const IterObserver& on_iter = {}) {
    if (T < 1) throw std::invalid_argument("T must be at least 1");
    std::vector<Activation> acts = activations_for(layers.size(), loss);
    TrainTrace trace;
    trace.losses.reserve(T);
    for (uint32_t k = 1; k <= T; ++k) {
        ForwardPass fp = forward_fc(x, layers, acts);
        trace.losses.push_back(loss_value(fp.a.back(), y, loss));
        if (loss == LossKind::CrossEntropySoftmax) trace.accs.push_back(accuracy(fp.a.back(), y));
        std::vector<Matrix> grads = backward_from(fp, x, y, layers);
        double alpha = rate_at(schedule, k);
        for (size_t r = 0; r < layers.size(); ++r) layers[r] -= alpha * grads[r];
        if (on_iter) on_iter(k, layers);
    }
    return trace;
}

}  // namespace

CentralizedResult centralized_train(const Dataset& ds, const std::vector<Eigen::Index>& hidden,
                                    Eigen::Index outputs, LossKind loss,
                                    const RateSchedule& schedule, uint32_t T, double delta,
                                    uint64_t seed, uint16_t init_stream,
                                    const IterObserver& on_iter) {
    CentralizedResult out;
    out.layers = init_confined(init_stream, InitPolicy{delta, seed},
                               layer_shapes_for(ds.d(), hidden, outputs))
                     .layers;
    out.trace = descend(ds.x, ds.y, out.layers, loss, schedule, T, on_iter);
    return out;
}

LocalResult local_train(const Dataset& ds, const PartitionPlan& plan,
                        const std::vector<Eigen::Index>& hidden, Eigen::Index outputs,
                        LossKind loss, const RateSchedule& schedule, uint32_t T, double delta,
                        uint64_t seed, const LocalIterObserver& on_iter) {
    std::vector<std::vector<Shard>> shards = apply_partition(ds, plan);
    LocalResult out;
    for (size_t i = 0; i < plan.m_h; ++i)
        for (size_t j = 0; j < plan.m_v; ++j) {
            uint16_t id = grid_to_id({i, j}, plan.m_v);
            ConfinedModel model =
                init_confined(id, InitPolicy{delta, seed},
                              layer_shapes_for(plan.feature_ranges[j].size(), hidden, outputs));
            IterObserver tagged;
            if (on_iter)
                tagged = [&, id](uint32_t k, const std::vector<Matrix>& ls) { on_iter(id, k, ls); };
            out.traces.push_back(
                descend(shards[i][j].x, shards[i][j].y, model.layers, loss, schedule, T, tagged));
            out.models.push_back(std::move(model));
        }
    return out;
}

Matrix slice_predict(const ConfinedModel& model, const PartitionPlan& plan, size_t col_j,
                     const Matrix& x_full, LossKind loss) {
    if (col_j >= plan.m_v) throw std::invalid_argument("feature group out of range");
    const RowRange& range = plan.feature_ranges[col_j];
    if (x_full.cols() < range.end) throw std::invalid_argument("input narrower than the plan");
    Matrix slice = x_full.middleCols(range.begin, range.size());
    return forward_fc(slice, model.layers, activations_for(model.layers.size(), loss)).a.back();
}

FedsgdResult fedsgd_train(RoundExecutor& ex, const Dataset& ds, const PartitionPlan& plan,
                          const std::vector<Eigen::Index>& hidden, Eigen::Index outputs,
                          LossKind loss, const RateSchedule& schedule, uint32_t T,
                          const FedsgdOptions& opts, const IterObserver& on_iter) {
    if (plan.m_v != 1)
        throw std::invalid_argument("federated SGD is a horizontal baseline; got m_v > 1");
    if (T < 1) throw std::invalid_argument("T must be at least 1");
    std::vector<std::vector<Shard>> shards = apply_partition(ds, plan);
    size_t m = plan.m_h;

    std::vector<uint16_t> all;
    for (size_t id = 0; id < m; ++id) all.push_back(uint16_t(id));
    if (ex.ids() != all)
        throw std::invalid_argument("executor participants do not match the partition");

    FedsgdResult out;
    out.layers = init_confined(0, InitPolicy{opts.delta, opts.seed},
                               layer_shapes_for(ds.d(), hidden, outputs))
                     .layers;
    size_t n_layers = out.layers.size();
    std::vector<Activation> acts = activations_for(n_layers, loss);

    // Slot layout is identical every round: the model broadcast first, then
    // the gradient sums (one per layer when secure, one per layer per
    // participant in clear otherwise).
    std::vector<SumSlot> slots;
    for (size_t r = 1; r <= n_layers; ++r)
        slots.push_back({uint8_t(r), kModelBroadcastTag, {0}, all});
    if (opts.secure) {
        for (size_t r = 1; r <= n_layers; ++r) slots.push_back({uint8_t(r), 0, all, all});
    } else {
        for (size_t r = 1; r <= n_layers; ++r)
            for (uint16_t l : all) slots.push_back({uint8_t(r), 0, {l}, all});
    }

    for (uint32_t k = 1; k <= T; ++k) {
        ForwardPass fp = forward_fc(ds.x, out.layers, acts);
        out.trace.losses.push_back(loss_value(fp.a.back(), ds.y, loss));
        if (loss == LossKind::CrossEntropySoftmax)
            out.trace.accs.push_back(accuracy(fp.a.back(), ds.y));

        std::map<uint16_t, SlotInputs> inputs;
        for (uint16_t id : all) inputs[id].resize(slots.size());
        for (size_t r = 0; r < n_layers; ++r) inputs[0][r] = flatten(out.layers[r]);

        for (uint16_t l : all) {
            const Shard& shard = shards[l][0];
            std::vector<Matrix> grads;
            double rows = double(shard.x.rows());
            if (opts.batch > 0 && Eigen::Index(opts.batch) < shard.x.rows()) {
                std::vector<Eigen::Index> pool(shard.x.rows());
                std::iota(pool.begin(), pool.end(), Eigen::Index(0));
                std::vector<Eigen::Index> pick;
                auto rng = substream(opts.seed, l, k, kBatchSalt);
                std::sample(pool.begin(), pool.end(), std::back_inserter(pick), opts.batch, rng);
                Matrix bx = shard.x(pick, Eigen::all);
                Matrix by = shard.y(pick, Eigen::all);
                grads = local_gradient(bx, by, out.layers, loss);
                rows = double(pick.size());
            } else {
                grads = local_gradient(shard.x, shard.y, out.layers, loss);
            }
            if (opts.scale == GradientScale::Sum)
                for (Matrix& g : grads) g *= rows;
            for (size_t r = 0; r < n_layers; ++r) {
                size_t s = opts.secure ? n_layers + r : n_layers + r * m + l;
                inputs[l][s] = flatten(grads[r]);
            }
        }

        std::map<uint16_t, SlotResults> results;
        try {
            results = ex.execute(k, slots, inputs);
        } catch (const std::exception& e) {
            throw ProtocolError("round " + std::to_string(k) + " failed: " + e.what());
        }

        const SlotResults& first = results.at(0);
        for (const auto& [id, res] : results)
            for (size_t s = 0; s < slots.size(); ++s)
                if (res[s].has_value() != first[s].has_value() ||
                    (res[s].has_value() && *res[s] != *first[s]))
                    throw ProtocolError("round " + std::to_string(k) +
                                        ": participants disagree on the aggregate");

        double alpha = rate_at(schedule, k);
        for (size_t r = 0; r < n_layers; ++r) {
            Matrix summed;
            if (opts.secure) {
                summed = unflatten(*first[n_layers + r], out.layers[r].rows(),
                                   out.layers[r].cols());
            } else {
                summed = Matrix::Zero(out.layers[r].rows(), out.layers[r].cols());
                for (size_t l = 0; l < m; ++l)
                    summed += unflatten(*first[n_layers + r * m + l], out.layers[r].rows(),
                                        out.layers[r].cols());
            }
            out.layers[r] -= alpha * summed;
        }
        if (on_iter) on_iter(k, out.layers);
    }
    return out;
}

}  // namespace cgd
