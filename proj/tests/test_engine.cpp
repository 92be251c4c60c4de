#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cgd/engine.hpp"
#include "cgd/fnn.hpp"

using namespace cgd;

namespace {

SessionConfig precise_codec(uint64_t seed) {
    SessionConfig cfg;
    cfg.codec = FixedPointCodec(24, 8.0);
    cfg.seed = seed;
    return cfg;
}

CgdConfig linreg_config(const SyntheticLinreg& s, size_t m_h, size_t m_v) {
    CgdConfig cfg;
    cfg.plan = make_partition(s.data.n(), s.data.d(), m_h, m_v);
    cfg.outputs = 1;
    cfg.loss = LossKind::MeanSquaredError;
    return cfg;
}

}  // namespace

TEST_CASE("zero init scale gives the zero model") {
    ConfinedModel m = init_confined(3, {0.0, 7}, {{4, 5}, {5, 2}});
    CHECK(m.owner == 3);
    REQUIRE(m.layers.size() == 2);
    CHECK(m.layers[0].isZero(0.0));
    CHECK(m.layers[1].isZero(0.0));
    CHECK_THROWS_AS(init_confined(0, {-0.1, 7}, {{2, 2}}), std::invalid_argument);
}

TEST_CASE("different seeds and different owners give different draws") {
    for (uint64_t trial = 0; trial < 100; ++trial) {
        ConfinedModel a = init_confined(0, {0.1, trial}, {{3, 3}});
        ConfinedModel b = init_confined(0, {0.1, trial + 1000}, {{3, 3}});
        ConfinedModel c = init_confined(1, {0.1, trial}, {{3, 3}});
        CHECK(a.layers[0] != b.layers[0]);
        CHECK(a.layers[0] != c.layers[0]);
    }
    ConfinedModel a = init_confined(0, {0.1, 5}, {{3, 3}});
    ConfinedModel b = init_confined(0, {0.1, 5}, {{3, 3}});
    CHECK(a.layers[0] == b.layers[0]);
}

TEST_CASE("init entries look like delta-scaled unit gaussians") {
    const double delta = 0.03;
    ConfinedModel m = init_confined(0, {delta, 11}, {{500, 200}});  // 1e5 entries
    double mean = m.layers[0].mean();
    double sd = std::sqrt((m.layers[0].array() - mean).square().mean());
    CHECK(std::abs(sd - delta) <= 0.05 * delta);
    CHECK(std::abs(mean) <= 0.01 * delta * 5.0);
}

TEST_CASE("fixed schedule is constant") {
    RateSchedule s = RateSchedule::fixed(0.01);
    CHECK(rate_at(s, 1) == 0.01);
    CHECK(rate_at(s, 12345) == 0.01);
    CHECK_THROWS_AS(rate_at(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(RateSchedule::fixed(0.0), std::invalid_argument);
}

TEST_CASE("diminishing schedule follows alpha over (k + muT) squared") {
    RateSchedule s = RateSchedule::diminishing(0.01, 0.1, 100);
    CHECK(rate_at(s, 1) == doctest::Approx(0.01 / 121.0).epsilon(1e-12));
    CHECK(rate_at(s, 1) == doctest::Approx(8.26446e-5).epsilon(1e-5));
    CHECK(rate_at(s, 100) == doctest::Approx(0.01 / 12100.0).epsilon(1e-12));
    CHECK(rate_at(s, 100) == doctest::Approx(8.26446e-7).epsilon(1e-5));
    CHECK_THROWS_AS(rate_at(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(rate_at(s, 101), std::invalid_argument);

    CHECK_THROWS_AS(RateSchedule::diminishing(0.01, 0.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(RateSchedule::diminishing(0.01, 1.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(RateSchedule::diminishing(0.01, 0.5, 0), std::invalid_argument);
}

TEST_CASE("descent step arithmetic") {
    ConfinedModel m;
    m.layers.push_back(Matrix::Constant(1, 1, 1.0));

    ConfinedModel same = cgd_step(m, {Matrix::Zero(1, 1)}, 0.1);
    CHECK(same.layers[0] == m.layers[0]);

    ConfinedModel moved = cgd_step(m, {Matrix::Constant(1, 1, 2.0)}, 0.1);
    CHECK(moved.layers[0](0, 0) == doctest::Approx(0.8).epsilon(1e-15));

    CHECK_THROWS_AS(cgd_step(m, {Matrix::Zero(2, 1)}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(cgd_step(m, {}, 0.1), std::invalid_argument);
}

TEST_CASE("a shared step preserves pairwise model differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    ConfinedModel a = init_confined(0, {0.5, 1}, {{6, 4}});
    ConfinedModel b = init_confined(1, {0.5, 1}, {{6, 4}});
    Matrix d0 = a.layers[0] - b.layers[0];
    for (int step = 0; step < 50; ++step) {
        Matrix s(6, 4);
        for (Eigen::Index i = 0; i < s.size(); ++i) s(i / 4, i % 4) = gauss(rng);
        a = cgd_step(a, {s}, 0.05);
        b = cgd_step(b, {s}, 0.05);
        CHECK(((a.layers[0] - b.layers[0]) - d0).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("regret of a flat trace") {
    RegretTrace t;
    t.reference = 0.25;
    t.losses = {0.25, 0.25, 0.25};
    CHECK(regret(t) == 0.0);
    t.losses = {1.25, 1.25, 1.25, 1.25};
    CHECK(regret(t) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("regret equals the naive average of gaps") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    RegretTrace t;
    t.reference = 0.1;
    for (int i = 0; i < 257; ++i) t.losses.push_back(u(rng));
    double naive = 0.0;
    for (double l : t.losses) naive += l - t.reference;
    naive /= double(t.losses.size());
    CHECK(std::abs(regret(t) - naive) <= 1e-12);
}

TEST_CASE("regret validates its inputs") {
    RegretTrace t;
    CHECK_THROWS_AS(regret(t), std::invalid_argument);
    t.losses = {1.0};
    CHECK_THROWS_AS(regret(t), std::invalid_argument);  // reference unset
}

TEST_CASE("epsilon bound hand values") {
    ConfinedModel a, b;
    a.layers.push_back(Matrix::Zero(1, 2));
    b.layers.push_back(Matrix::Zero(1, 2));
    CHECK(epsilon_bound({a, b}, 0) == 0.0);

    b.layers[0](0, 0) = -3.0;
    b.layers[0](0, 1) = -4.0;  // a - b = [3, 4]
    CHECK(epsilon_bound({a, b}, 0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(epsilon_bound({a, b}, 1) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("epsilon bound scales homogeneously") {
    std::vector<ConfinedModel> models;
    for (uint16_t l = 0; l < 4; ++l) models.push_back(init_confined(l, {0.2, 9}, {{3, 2}, {2, 2}}));
    double base = epsilon_bound(models, 0);
    CHECK(base > 0.0);
    for (double c : {2.0, -0.5}) {
        std::vector<ConfinedModel> scaled = models;
        for (auto& m : scaled)
            for (auto& w : m.layers) w *= c;
        CHECK(epsilon_bound(scaled, 0) == doctest::Approx(std::abs(c) * base).epsilon(1e-12));
    }
}

TEST_CASE("epsilon bound rejects mismatched shapes") {
    ConfinedModel a, b;
    a.layers.push_back(Matrix::Zero(2, 2));
    b.layers.push_back(Matrix::Zero(2, 3));
    CHECK_THROWS_AS(epsilon_bound({a, b}, 0), std::invalid_argument);
    CHECK_THROWS_AS(epsilon_bound({}, 0), std::invalid_argument);
}

TEST_CASE("zero iterations rejected, zero gradients change nothing") {
    SyntheticLinreg s = synthetic_linreg(12, 3, 0.1, 31);
    s.data.x.setZero();  // gradients vanish regardless of labels
    CgdConfig cfg = linreg_config(s, 2, 1);

    LocalExecutor ex0({0, 1}, precise_codec(1));
    CHECK_THROWS_AS(run_cgd(ex0, s.data, cfg, 0), std::invalid_argument);

    LocalExecutor ex({0, 1}, precise_codec(1));
    CgdSession session(ex, s.data, cfg);
    std::vector<ConfinedModel> before = session.models();
    session.step();
    for (size_t l = 0; l < before.size(); ++l)
        CHECK(session.models()[l].layers[0] == before[l].layers[0]);
}

TEST_CASE("horizontal grid with shared init tracks centralized descent at rate m*alpha") {
    SyntheticLinreg s = synthetic_linreg(60, 5, 0.3, 17);
    const size_t m = 3;
    const double alpha = 5e-4;

    CgdConfig cfg = linreg_config(s, m, 1);
    cfg.schedule = RateSchedule::fixed(alpha);
    cfg.identical_init = true;
    cfg.delta = 0.1;
    cfg.seed = 2;

    LocalExecutor ex({0, 1, 2}, precise_codec(3));
    CgdSession session(ex, s.data, cfg);
    Matrix w = session.models()[0].layers[0];

    for (int k = 0; k < 100; ++k) {
        session.step();
        w -= (double(m) * alpha) * (s.data.x.transpose() * (s.data.x * w - s.data.y) / 60.0);
    }
    for (uint16_t l = 0; l < m; ++l)
        CHECK((session.models()[l].layers[0] - w).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("pairwise distances are preserved over a long run") {
    SyntheticLinreg s = synthetic_linreg(12, 2, 0.2, 41);
    CgdConfig cfg = linreg_config(s, 3, 1);
    cfg.schedule = RateSchedule::fixed(0.001);
    cfg.delta = 0.1;
    cfg.seed = 4;

    LocalExecutor ex({0, 1, 2}, precise_codec(5));
    CgdSession session(ex, s.data, cfg);
    std::vector<Matrix> init;
    for (const auto& model : session.models()) init.push_back(model.layers[0]);

    for (int k = 0; k < 2000; ++k) session.step();
    for (size_t l = 0; l < 3; ++l)
        for (size_t j = l + 1; j < 3; ++j) {
            Matrix now = session.models()[l].layers[0] - session.models()[j].layers[0];
            Matrix was = init[l] - init[j];
            CHECK((now - was).cwiseAbs().maxCoeff() <= 1e-6);
        }
}

TEST_CASE("transcripts never carry model weights") {
    SyntheticLinreg s = synthetic_linreg(16, 4, 0.2, 51);
    CgdConfig cfg = linreg_config(s, 2, 2);
    cfg.schedule = RateSchedule::fixed(0.01);
    cfg.delta = 0.1;

    SessionConfig scfg = precise_codec(7);
    LocalExecutor ex({0, 1, 2, 3}, scfg, true);
    CgdSession session(ex, s.data, cfg);

    std::vector<RingVec> weight_images;
    auto snapshot = [&] {
        for (const auto& model : session.models())
            for (const Matrix& w : model.layers) {
                std::vector<double> flat(w.data(), w.data() + w.size());
                weight_images.push_back(scfg.codec.encode(flat));
            }
    };
    snapshot();
    for (int k = 0; k < 5; ++k) {
        session.step();
        snapshot();
    }

    size_t payloads = 0;
    for (const auto& [id, transcript] : ex.transcripts())
        for (const auto& entry : transcript) {
            if (entry.msg.kind == MsgKind::Barrier || !entry.outgoing) continue;
            ++payloads;
            for (const RingVec& image : weight_images) CHECK(entry.msg.payload != image);
        }
    CHECK(payloads > 0);
}

TEST_CASE("loss keeps trending down on a convex task") {
    for (uint64_t seed : {1, 2, 3, 4, 5}) {
        SyntheticLinreg s = synthetic_linreg(40, 4, 0.2, 60 + seed);
        CgdConfig cfg = linreg_config(s, 2, 1);
        cfg.schedule = RateSchedule::fixed(0.005);
        cfg.delta = 0.1;
        cfg.seed = seed;

        LocalExecutor ex({0, 1}, precise_codec(seed));
        CgdResult r = run_cgd(ex, s.data, cfg, 200, 0, s.f_star);
        CHECK(r.trace.losses[199] <= r.trace.losses[19]);
        CHECK(regret(r.trace) >= 0.0);
    }
}

TEST_CASE("smaller init spread lands closer to the optimum") {
    std::vector<double> deltas{0.001, 0.01, 0.1};
    std::vector<double> medians;
    for (double delta : deltas) {
        std::vector<double> gaps;
        for (uint64_t seed = 1; seed <= 5; ++seed) {
            SyntheticLinreg s = synthetic_linreg(80, 5, 0.2, 900 + seed);
            CgdConfig cfg = linreg_config(s, 4, 1);
            cfg.schedule = RateSchedule::fixed(0.02);
            cfg.delta = delta;
            cfg.seed = seed;

            LocalExecutor ex({0, 1, 2, 3}, precise_codec(seed));
            CgdResult r = run_cgd(ex, s.data, cfg, 500, 0, s.f_star);
            gaps.push_back(r.trace.losses.back() - s.f_star);
        }
        std::sort(gaps.begin(), gaps.end());
        medians.push_back(gaps[2]);
    }
    CHECK(medians[0] <= medians[1]);
    CHECK(medians[1] <= medians[2]);
}

TEST_CASE("vertical slices still descend on the convex task") {
    SyntheticLinreg s = synthetic_linreg(40, 6, 0.2, 71);
    CgdConfig cfg = linreg_config(s, 2, 3);
    cfg.schedule = RateSchedule::fixed(0.01);
    cfg.delta = 0.05;

    LocalExecutor ex({0, 1, 2, 3, 4, 5}, precise_codec(9));
    CgdResult r = run_cgd(ex, s.data, cfg, 150, 0, s.f_star);
    CHECK(r.trace.losses.back() < r.trace.losses.front());
}

TEST_CASE("session rejects a mismatched executor roster") {
    SyntheticLinreg s = synthetic_linreg(12, 3, 0.1, 81);
    CgdConfig cfg = linreg_config(s, 2, 1);
    LocalExecutor wrong({0, 1, 2}, precise_codec(1));
    CHECK_THROWS_AS(CgdSession(wrong, s.data, cfg), std::invalid_argument);
}
