#include "cgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cgd/fnn.hpp"
#include "cgd/ring.hpp"

namespace cgd {

namespace {

constexpr uint32_t kInitSalt = 0x1D17;

}  // namespace

ConfinedModel init_confined(uint16_t owner, const InitPolicy& policy,
                            const std::vector<LayerShape>& shapes) {
    if (policy.delta < 0.0) throw std::invalid_argument("negative init scale");
    ConfinedModel m;
    m.owner = owner;
    auto rng = substream(policy.seed, owner, 0, kInitSalt);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const LayerShape& s : shapes) {
        if (s.rows < 1 || s.cols < 1) throw std::invalid_argument("bad layer shape");
        Matrix w(s.rows, s.cols);
        for (Eigen::Index i = 0; i < s.rows; ++i)
            for (Eigen::Index j = 0; j < s.cols; ++j) w(i, j) = policy.delta * gauss(rng);
        m.layers.push_back(std::move(w));
    }
    return m;
}

RateSchedule RateSchedule::fixed(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    return {Mode::Fixed, alpha, 0.0, 0};
}

RateSchedule RateSchedule::diminishing(double alpha, double mu, uint32_t T) {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    if (mu <= 0.0 || mu >= 1.0) throw std::invalid_argument("mu must lie in (0,1)");
    if (T < 1) throw std::invalid_argument("T must be at least 1");
    return {Mode::Diminishing, alpha, mu, T};
}

double rate_at(const RateSchedule& s, uint32_t k) {
    if (k < 1) throw std::invalid_argument("iterations are 1-based");
    if (s.mode == RateSchedule::Mode::Fixed) return s.alpha;
    if (k > s.T) throw std::invalid_argument("iteration past the schedule horizon");
    double base = double(k) + s.mu * double(s.T);
    return s.alpha / (base * base);
}

ConfinedModel cgd_step(const ConfinedModel& model, const std::vector<Matrix>& summed_grad,
                       double alpha_k) {
    if (summed_grad.size() != model.layers.size())
        throw std::invalid_argument("gradient/model layer count mismatch");
    ConfinedModel out;
    out.owner = model.owner;
    out.layers.reserve(model.layers.size());
    for (size_t r = 0; r < model.layers.size(); ++r) {
        if (summed_grad[r].rows() != model.layers[r].rows() ||
            summed_grad[r].cols() != model.layers[r].cols())
            throw std::invalid_argument("gradient/model shape mismatch");
        out.layers.push_back(model.layers[r] - alpha_k * summed_grad[r]);
    }
    return out;
}

double regret(const RegretTrace& trace) {
    if (trace.losses.empty()) throw std::invalid_argument("empty trace");
    if (!std::isfinite(trace.reference)) throw std::invalid_argument("reference loss not set");
    double s = 0.0;
    for (double l : trace.losses) s += l - trace.reference;
    return s / double(trace.losses.size());
}

double epsilon_bound(const std::vector<ConfinedModel>& initial, size_t reference) {
    if (initial.empty()) throw std::invalid_argument("no models");
    if (reference >= initial.size()) throw std::invalid_argument("reference out of range");
    const ConfinedModel& ref = initial[reference];
    for (const ConfinedModel& m : initial) {
        if (m.layers.size() != ref.layers.size())
            throw std::invalid_argument("layer count mismatch");
        for (size_t r = 0; r < ref.layers.size(); ++r)
            if (m.layers[r].rows() != ref.layers[r].rows() ||
                m.layers[r].cols() != ref.layers[r].cols())
                throw std::invalid_argument("layer shape mismatch");
    }

    double sq = 0.0;
    for (size_t r = 0; r < ref.layers.size(); ++r) {
        Matrix mean_diff = Matrix::Zero(ref.layers[r].rows(), ref.layers[r].cols());
        for (const ConfinedModel& m : initial) mean_diff += ref.layers[r] - m.layers[r];
        mean_diff /= double(initial.size());
        sq += mean_diff.squaredNorm();
    }
    return double(initial.size()) * std::sqrt(sq);
}

CgdSession::CgdSession(RoundExecutor& ex, const Dataset& train, CgdConfig cfg)
    : ex_(ex), cfg_(std::move(cfg)), train_(train) {
    shards_ = apply_partition(train_, cfg_.plan);

    size_t m = cfg_.plan.m_h * cfg_.plan.m_v;
    std::vector<uint16_t> expect;
    for (size_t id = 0; id < m; ++id) expect.push_back(uint16_t(id));
    if (ex_.ids() != expect)
        throw std::invalid_argument("executor participants do not match the grid");
    if (!cfg_.delta_per.empty() && cfg_.delta_per.size() != m)
        throw std::invalid_argument("delta_per must list one scale per participant");

    for (size_t i = 0; i < cfg_.plan.m_h; ++i)
        for (size_t j = 0; j < cfg_.plan.m_v; ++j) {
            uint16_t id = grid_to_id({i, j}, cfg_.plan.m_v);
            InitPolicy policy{cfg_.delta_per.empty() ? cfg_.delta : cfg_.delta_per[id],
                              cfg_.seed};
            uint16_t stream_owner = cfg_.identical_init ? 0 : id;
            ConfinedModel model = init_confined(
                stream_owner, policy,
                layer_shapes_for(cfg_.plan.feature_ranges[j].size(), cfg_.hidden, cfg_.outputs));
            model.owner = id;
            models_.push_back(std::move(model));
        }

    slots_ = gradient_slots(cfg_.plan, cfg_.hidden.size() + 1);
}

void CgdSession::step() {
    uint32_t k = k_ + 1;
    double alpha = rate_at(cfg_.schedule, k);

    std::map<uint16_t, SlotInputs> inputs;
    for (size_t i = 0; i < cfg_.plan.m_h; ++i)
        for (size_t j = 0; j < cfg_.plan.m_v; ++j) {
            uint16_t id = grid_to_id({i, j}, cfg_.plan.m_v);
            auto grads = backward_local(shards_[i][j], models_[id], cfg_.loss);
            inputs[id] = bundle_inputs(grads, {i, j}, cfg_.plan);
        }

    std::map<uint16_t, SlotResults> results;
    try {
        results = ex_.execute(k, slots_, inputs);
    } catch (const std::exception& e) {
        throw ProtocolError("round " + std::to_string(k) + " failed: " + e.what());
    }

    for (size_t i = 0; i < cfg_.plan.m_h; ++i)
        for (size_t j = 0; j < cfg_.plan.m_v; ++j) {
            uint16_t id = grid_to_id({i, j}, cfg_.plan.m_v);
            descend_round(models_[id], results.at(id), {i, j}, cfg_.plan, alpha);
        }
    k_ = k;
}

Matrix CgdSession::assembled_prediction(size_t row_i, const Matrix& x_full) const {
    return grid_predict(models_, cfg_.plan, row_i, x_full, cfg_.loss);
}

double CgdSession::participant_loss(uint16_t id) const {
    GridId g = id_to_grid(id, cfg_.plan.m_v);
    return loss_value(assembled_prediction(g.i, train_.x), train_.y, cfg_.loss);
}

CgdResult run_cgd(RoundExecutor& ex, const Dataset& train, const CgdConfig& cfg, uint32_t T,
                  uint16_t designated, double f_reference) {
    if (T < 1) throw std::invalid_argument("T must be at least 1");
    CgdSession session(ex, train, cfg);
    if (designated >= session.participants())
        throw std::invalid_argument("designated participant out of range");

    CgdResult out;
    out.trace.reference = f_reference;
    for (uint32_t k = 1; k <= T; ++k) {
        session.step();
        out.trace.losses.push_back(session.participant_loss(designated));
    }
    out.models = session.models();
    return out;
}

}  // namespace cgd
