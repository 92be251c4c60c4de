#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cgd/baselines.hpp"
#include "cgd/fnn.hpp"
#include "cgd/privacy.hpp"

using namespace cgd;

namespace {

RingVec encode_matrix(const FixedPointCodec& codec, const Matrix& m) {
    return codec.encode({m.data(), size_t(m.size())});
}

std::map<uint16_t, Transcript> bus_transcripts(LocalBus& bus) {
    std::map<uint16_t, Transcript> out;
    for (uint16_t id : bus.ids()) out[id] = bus.endpoint(id).transcript();
    return out;
}

// One four-party sum slot driven for `rounds` rounds with data-dependent
// inputs; the workhorse fixture for view capture.
struct SumRun {
    SessionShape shape;
    std::map<uint16_t, Transcript> transcripts;
    std::map<SlotKey, std::map<uint16_t, RingVec>> all_encoded;  // every participant

    SumRun(size_t m, size_t dim, uint32_t rounds, Topology topo, uint64_t seed) {
        shape.cfg.topology = topo;
        shape.cfg.seed = seed;
        shape.rounds = rounds;
        std::vector<uint16_t> ids;
        for (size_t i = 0; i < m; ++i) ids.push_back(uint16_t(i));
        shape.roster = ids;
        if (topo == Topology::Aggregator) shape.cfg.aggregator = ids[0];
        shape.slots = {SumSlot{1, 0, ids, ids}};

        LocalBus bus(shape.roster, /*record=*/true);
        std::mt19937_64 rng(seed * 13 + 5);
        std::uniform_real_distribution<double> val(-4.0, 4.0);
        for (uint32_t r = 1; r <= rounds; ++r) {
            std::map<uint16_t, SlotInputs> in;
            SlotKey key{r, 1, 0};
            for (uint16_t id : ids) {
                std::vector<double> x(dim);
                for (double& v : x) v = val(rng);
                all_encoded[key][id] = shape.cfg.codec.encode(x);
                in[id] = {x};
            }
            run_round_local(bus, shape.cfg, r, shape.slots, in);
        }
        transcripts = bus_transcripts(bus);
    }

    MemberInputs inputs_of(const std::vector<uint16_t>& members) const {
        MemberInputs mi;
        for (const auto& [key, per_id] : all_encoded)
            for (uint16_t m : members) mi[key][m] = per_id.at(m);
        return mi;
    }

    RingVec ring_sum(const SlotKey& key, const std::vector<uint16_t>& ids) const {
        RingVec acc;
        for (uint16_t id : ids) {
            const RingVec& v = all_encoded.at(key).at(id);
            if (acc.empty())
                acc = v;
            else
                ring_add_inplace(acc, v);
        }
        return acc;
    }
};

}  // namespace

TEST_CASE("coalition threshold is m-2 contributing participants") {
    SumRun run(4, 3, 1, Topology::AllToAll, 1);
    Coalition too_big{{0, 1, 2}, false};
    CHECK_THROWS_AS(capture_view(run.transcripts, too_big, run.shape, {}), std::invalid_argument);

    Coalition ok{{0, 1}, false};
    AdversaryView v = capture_view(run.transcripts, ok, run.shape, run.inputs_of({0, 1}));
    CHECK(v.coalition.members == std::vector<uint16_t>{0, 1});

    Coalition stranger{{9}, false};
    CHECK_THROWS_AS(capture_view(run.transcripts, stranger, run.shape, {}),
                    std::invalid_argument);
}

TEST_CASE("empty coalition yields an empty view") {
    SumRun run(3, 2, 2, Topology::AllToAll, 2);
    AdversaryView v = capture_view(run.transcripts, Coalition{}, run.shape, {});
    CHECK(v.observed.empty());
    CHECK(v.totals.empty());
    CHECK(v.honest_sums.empty());
    CHECK(v.inputs.empty());
}

TEST_CASE("a maximal coalition reconstructs exactly the honest-party sum") {
    SumRun run(5, 4, 3, Topology::AllToAll, 3);
    Coalition c{{0, 1, 2}, false};  // m-2 of 5
    AdversaryView v = capture_view(run.transcripts, c, run.shape, run.inputs_of({0, 1, 2}));
    for (uint32_t r = 1; r <= 3; ++r) {
        SlotKey key{r, 1, 0};
        REQUIRE(v.totals.count(key) == 1);
        CHECK(v.totals.at(key) == run.ring_sum(key, {0, 1, 2, 3, 4}));
        CHECK(v.honest_sums.at(key) == run.ring_sum(key, {3, 4}));
    }
}

TEST_CASE("a corrupted aggregator sees every partial but derives only the sum") {
    // Dedicated aggregator: id 4 reconstructs and fans out but contributes
    // nothing.
    SessionShape shape;
    shape.cfg.topology = Topology::Aggregator;
    shape.cfg.aggregator = 4;
    shape.cfg.seed = 4;
    shape.roster = {0, 1, 2, 3, 4};
    std::vector<uint16_t> workers{0, 1, 2, 3};
    shape.slots = {SumSlot{1, 0, workers, workers}};
    shape.rounds = 2;

    LocalBus bus(shape.roster, true);
    std::map<SlotKey, std::map<uint16_t, RingVec>> encoded;
    for (uint32_t r = 1; r <= 2; ++r) {
        std::map<uint16_t, SlotInputs> in;
        for (uint16_t id : workers) {
            std::vector<double> x{double(id) + 0.5, double(r)};
            encoded[SlotKey{r, 1, 0}][id] = shape.cfg.codec.encode(x);
            in[id] = {x};
        }
        in[4] = {std::nullopt};
        run_round_local(bus, shape.cfg, r, shape.slots, in);
    }
    auto transcripts = bus_transcripts(bus);

    Coalition c{{4}, false};
    AdversaryView v = capture_view(transcripts, c, shape, {});
    CHECK(v.coalition.includes_aggregator);

    for (uint32_t r = 1; r <= 2; ++r) {
        SlotKey key{r, 1, 0};
        RingVec expect;
        size_t partials_seen = 0;
        for (uint16_t id : workers) {
            const RingVec& e = encoded.at(key).at(id);
            if (expect.empty())
                expect = e;
            else
                ring_add_inplace(expect, e);
        }
        CHECK(v.totals.at(key) == expect);
        CHECK(v.honest_sums.at(key) == expect);  // nothing of its own to subtract
        for (const TranscriptEntry& e : v.observed.at(4)) {
            if (e.outgoing || e.msg.kind != MsgKind::Partial || e.msg.round != r) continue;
            ++partials_seen;
            // no partial is any participant's plaintext contribution
            for (uint16_t id : workers) CHECK(e.msg.payload != encoded.at(key).at(id));
        }
        CHECK(partials_seen == workers.size());
    }
}

TEST_CASE("simulation reproduces every derivable aggregate over fifty rounds") {
    SumRun run(5, 6, 50, Topology::AllToAll, 7);
    Coalition c{{1, 3}, false};
    MemberInputs inputs = run.inputs_of({1, 3});
    AdversaryView real = capture_view(run.transcripts, c, run.shape, inputs);
    AdversaryView sim = simulate_view(c, run.shape, inputs, real.honest_sums, 99);

    CHECK(sim.totals == real.totals);
    CHECK(sim.honest_sums == real.honest_sums);

    IndistinguishabilityReport rep = views_indistinguishable(real, sim);
    CHECK(rep.structure_ok);
    CHECK(rep.aggregates_equal);
    CHECK(rep.real_shares_uniform);
    CHECK(rep.sim_shares_uniform);
    CHECK(rep.indistinguishable);
    CHECK(rep.real_share_bytes >= kMinUniformityBytes);
}

TEST_CASE("simulated honest shares have a uniform marginal") {
    SumRun run(5, 200, 50, Topology::AllToAll, 8);
    Coalition c{{0, 2}, false};
    MemberInputs inputs = run.inputs_of({0, 2});
    AdversaryView real = capture_view(run.transcripts, c, run.shape, inputs);
    AdversaryView sim = simulate_view(c, run.shape, inputs, real.honest_sums, 123);

    double sum = 0.0;
    size_t count = 0;
    for (const auto& [m, t] : sim.observed)
        for (const TranscriptEntry& e : t) {
            if (e.outgoing || e.msg.kind != MsgKind::Share) continue;
            if (std::binary_search(c.members.begin(), c.members.end(), e.msg.sender)) continue;
            for (uint32_t w : e.msg.payload) {
                sum += double(w);
                ++count;
            }
        }
    REQUIRE(count >= 10000);
    double mean = sum / double(count);
    CHECK(std::abs(mean - 2147483648.0) <= 0.01 * 2147483648.0);
}

TEST_CASE("derivables are blind to honest reshuffling under a fixed sum") {
    SessionShape shape;
    shape.cfg.seed = 12;
    shape.roster = {0, 1, 2, 3};
    shape.slots = {SumSlot{1, 0, {0, 1, 2, 3}, {0, 1, 2, 3}}};
    shape.rounds = 2;

    // Honest inputs differ between rounds but keep the same sum; every value
    // is exactly representable so the ring sums collide precisely.
    LocalBus bus(shape.roster, true);
    std::map<uint16_t, SlotInputs> r1{{0, {{{0.125}}}},
                                      {1, {{{1.0}}}},
                                      {2, {{{2.0}}}},
                                      {3, {{{0.25}}}}};
    std::map<uint16_t, SlotInputs> r2{{0, {{{0.125}}}},
                                      {1, {{{0.5}}}},
                                      {2, {{{2.25}}}},
                                      {3, {{{0.5}}}}};
    run_round_local(bus, shape.cfg, 1, shape.slots, r1);
    run_round_local(bus, shape.cfg, 2, shape.slots, r2);

    MemberInputs inputs;
    inputs[SlotKey{1, 1, 0}][0] = shape.cfg.codec.encode(std::vector<double>{0.125});
    inputs[SlotKey{2, 1, 0}][0] = shape.cfg.codec.encode(std::vector<double>{0.125});
    AdversaryView v = capture_view(bus_transcripts(bus), Coalition{{0}, false}, shape, inputs);

    CHECK(v.totals.at(SlotKey{1, 1, 0}) == v.totals.at(SlotKey{2, 1, 0}));
    CHECK(v.honest_sums.at(SlotKey{1, 1, 0}) == v.honest_sums.at(SlotKey{2, 1, 0}));

    // while the raw honest traffic does change round over round
    std::vector<RingVec> shares_r1, shares_r2;
    for (const TranscriptEntry& e : v.observed.at(0)) {
        if (e.outgoing || e.msg.kind != MsgKind::Share || e.msg.sender == 0) continue;
        (e.msg.round == 1 ? shares_r1 : shares_r2).push_back(e.msg.payload);
    }
    CHECK(shares_r1.size() == shares_r2.size());
    CHECK(shares_r1 != shares_r2);
}

TEST_CASE("theorem-2 style simulation of a full confined run is indistinguishable") {
    SyntheticLinreg s = synthetic_linreg(60, 8, 0.1, 42);
    CgdConfig cfg;
    cfg.plan = make_partition(60, 8, 5, 1);
    cfg.loss = LossKind::MeanSquaredError;
    cfg.schedule = RateSchedule::fixed(0.01);
    cfg.seed = 42;

    SessionConfig scfg;
    scfg.seed = 42;
    LocalExecutor ex({0, 1, 2, 3, 4}, scfg, /*record=*/true);
    CgdSession sess(ex, s.data, cfg);

    // Corrupted members log their own contributions as training progresses.
    Coalition c{{0, 1, 2}, false};
    std::vector<std::vector<Shard>> shards = apply_partition(s.data, cfg.plan);
    MemberInputs inputs;
    uint32_t rounds = 50;
    for (uint32_t k = 1; k <= rounds; ++k) {
        for (uint16_t m : c.members) {
            GridId g = id_to_grid(m, cfg.plan.m_v);
            std::vector<Matrix> grads =
                backward_local(shards[g.i][g.j], sess.model(m), cfg.loss);
            inputs[SlotKey{k, 1, 1}][m] = encode_matrix(scfg.codec, grads[0]);
        }
        sess.step();
    }

    SessionShape shape{scfg, gradient_slots(cfg.plan, 1), {0, 1, 2, 3, 4}, rounds};
    AdversaryView real = capture_view(ex.transcripts(), c, shape, inputs);
    REQUIRE(real.totals.size() == rounds);

    AdversaryView sim = simulate_view(c, shape, inputs, real.honest_sums, 77);
    IndistinguishabilityReport rep = views_indistinguishable(real, sim);
    CHECK(rep.indistinguishable);
    CHECK(rep.detail.find("indistinguishable") != std::string::npos);

    // Negative control 1: an extra plaintext message breaks the structure.
    AdversaryView leaky = sim;
    TranscriptEntry extra;
    extra.outgoing = false;
    extra.msg = WireMessage{MsgKind::Partial, 1, 1, 1, 3, 0,
                            inputs.at(SlotKey{1, 1, 1}).at(0)};
    leaky.observed.at(0).push_back(extra);
    IndistinguishabilityReport bad = views_indistinguishable(real, leaky);
    CHECK_FALSE(bad.structure_ok);
    CHECK_FALSE(bad.indistinguishable);

    // Negative control 2: same shape, but a tampered partial shifts the
    // aggregates the coalition derives away from the real ones.
    AdversaryView forged = simulate_view(c, shape, inputs, real.honest_sums, 78);
    for (TranscriptEntry& e : forged.observed.at(0))
        if (!e.outgoing && e.msg.kind == MsgKind::Partial && e.msg.sender == 4) {
            for (uint32_t& w : e.msg.payload) w ^= 0x5A5A5A5Au;
            break;
        }
    forged.totals.clear();
    forged.honest_sums.clear();
    AdversaryView recaptured = capture_view(forged.observed, c, shape, inputs);
    IndistinguishabilityReport bad2 = views_indistinguishable(real, recaptured);
    CHECK_FALSE(bad2.aggregates_equal);
    CHECK_FALSE(bad2.indistinguishable);
}

TEST_CASE("plain federated gradients cannot be simulated from sums alone") {
    SyntheticLinreg s = synthetic_linreg(32, 8, 0.1, 55);
    size_t m = 4;
    PartitionPlan plan = make_partition(32, 8, m, 1);
    SessionConfig scfg;
    scfg.seed = 55;
    LocalExecutor ex({0, 1, 2, 3}, scfg, /*record=*/true);
    uint32_t T = 25;
    fedsgd_train(ex, s.data, plan, {}, 1, LossKind::MeanSquaredError, RateSchedule::fixed(0.02),
                 T, FedsgdOptions{/*secure=*/false, 0, GradientScale::Mean, 0.1, 55});

    std::vector<uint16_t> all{0, 1, 2, 3};
    std::vector<SumSlot> slots{SumSlot{1, kModelBroadcastTag, {0}, all}};
    for (uint16_t l : all) slots.push_back(SumSlot{1, 0, {l}, all});
    SessionShape shape{scfg, slots, all, T};

    // Sanity: the shared model is sitting in the clear on this transcript.
    auto obs = model_broadcast_observations(ex.transcripts().at(3), scfg.codec,
                                            RateSchedule::fixed(0.02));
    REQUIRE(obs.size() == T - 1);

    // The member's own contributions, exactly as they hit the wire: in plain
    // mode its single-contributor partial is the encoded gradient itself.
    Coalition c{{3}, false};
    MemberInputs inputs;
    for (const TranscriptEntry& e : ex.transcripts().at(3))
        if (e.outgoing && e.msg.kind == MsgKind::Partial && e.msg.group_tag == 0)
            inputs[SlotKey{e.msg.round, e.msg.layer_tag, 0}][3] = e.msg.payload;

    AdversaryView real = capture_view(ex.transcripts(), c, shape, inputs);
    AdversaryView sim = simulate_view(c, shape, inputs, real.honest_sums, 1000);
    IndistinguishabilityReport rep = views_indistinguishable(real, sim);

    CHECK_FALSE(rep.indistinguishable);
    // The decisive signal: gradients travel in clear partials here, so the
    // view contains no masked share traffic at all and the uniformity
    // check fails closed rather than vouching for an empty pool.
    CHECK_FALSE(rep.real_shares_uniform);
    CHECK(rep.real_share_bytes < kMinUniformityBytes);
    CHECK(rep.detail.find("DISTINGUISHABLE") != std::string::npos);
}

TEST_CASE("chi-square helper separates uniform from constant bytes") {
    std::mt19937_64 rng(3);
    std::vector<uint8_t> uniform(1 << 16);
    for (uint8_t& b : uniform) b = uint8_t(rng());
    CHECK(chi_square_bytes(uniform) <= kChiSquare255At01);

    std::vector<uint8_t> constant(1 << 16, 0x42);
    CHECK(chi_square_bytes(constant) > 1e6);
    CHECK(chi_square_bytes({}) == 0.0);
}

TEST_CASE("extractor recovers the gram matrix from exact observations") {
    Matrix x(3, 2);
    x << 1.0, 2.0, -1.0, 0.5, 0.25, -3.0;
    Matrix y(3, 1);
    y << 0.5, -1.0, 2.0;
    Matrix gram = x.transpose() * x;
    Matrix cross = x.transpose() * y;

    std::vector<std::pair<Matrix, Matrix>> obs;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int k = 0; k < 4; ++k) {
        Matrix w(2, 1);
        w << val(rng), val(rng);
        obs.emplace_back(w, gram * w - cross);
    }
    LinregLeak leak = leakage_extract_linreg(obs);
    CHECK((leak.xtx - gram).norm() / gram.norm() <= 1e-6);
    CHECK((leak.xty - cross).norm() / cross.norm() <= 1e-6);
}

TEST_CASE("extractor rejects missing or degenerate observations") {
    CHECK_THROWS_AS(leakage_extract_linreg({}), PrivacyError);

    Matrix w = Matrix::Ones(2, 1);
    Matrix s = Matrix::Zero(2, 1);
    std::vector<std::pair<Matrix, Matrix>> two{{w, s}, {w, s}};
    CHECK_THROWS_AS(leakage_extract_linreg(two), PrivacyError);

    std::vector<std::pair<Matrix, Matrix>> same{{w, s}, {w, s}, {w, s}, {w, s}};
    CHECK_THROWS_AS(leakage_extract_linreg(same), PrivacyError);
}

TEST_CASE("secure aggregation still leaks the honest gram matrix to one member") {
    SyntheticLinreg s = synthetic_linreg(12, 3, 0.05, 71);
    size_t m = 3;
    PartitionPlan plan = make_partition(12, 3, m, 1);
    std::vector<std::vector<Shard>> shards = apply_partition(s.data, plan);
    const Shard& own = shards[2][0];

    // Six short sessions over the same data, each freshly initialized.
    // Member 2 pockets the broadcast model and the aggregate it helped
    // reconstruct; subtracting its own submission leaves a point on the
    // honest cohort's s(w) = (X^T X) w - X^T y line, exact up to encoding.
    // Fresh random models keep the observations well spread, which one
    // converging trajectory would not.
    std::vector<uint16_t> all{0, 1, 2};
    std::vector<std::pair<Matrix, Matrix>> obs;
    for (uint64_t run = 0; run < 6; ++run) {
        SessionConfig scfg;
        scfg.seed = 71 + run;
        scfg.codec = FixedPointCodec(24, 64.0);
        LocalExecutor ex(all, scfg, /*record=*/true);
        FedsgdOptions opts;
        opts.secure = true;
        opts.scale = GradientScale::Sum;
        opts.delta = 1.0;
        opts.seed = 100 + run;
        fedsgd_train(ex, s.data, plan, {}, 1, LossKind::MeanSquaredError,
                     RateSchedule::fixed(0.03), 2, opts);

        std::vector<SumSlot> slots{SumSlot{1, kModelBroadcastTag, {0}, all},
                                   SumSlot{1, 0, all, all}};
        SessionShape shape{scfg, slots, all, 2};
        AdversaryView v = capture_view(ex.transcripts(), Coalition{{2}, false}, shape, {});

        std::vector<double> wd =
            scfg.codec.decode(v.totals.at(SlotKey{1, 1, kModelBroadcastTag}));
        std::vector<double> gd = scfg.codec.decode(v.totals.at(SlotKey{1, 1, 0}));
        Matrix w = Eigen::Map<const Matrix>(wd.data(), 3, 1);
        Matrix gsum = Eigen::Map<const Matrix>(gd.data(), 3, 1);
        obs.emplace_back(w, gsum - own.x.transpose() * (own.x * w - own.y));
    }

    LinregLeak leak = leakage_extract_linreg(obs);
    Matrix hx(shards[0][0].x.rows() + shards[1][0].x.rows(), 3);
    hx << shards[0][0].x, shards[1][0].x;
    Matrix hy(hx.rows(), 1);
    hy << shards[0][0].y, shards[1][0].y;
    Matrix gram = hx.transpose() * hx;
    Matrix cross = hx.transpose() * hy;
    CHECK((leak.xtx - gram).norm() / gram.norm() <= 1e-6);
    CHECK((leak.xty - cross).norm() / cross.norm() <= 1e-6);
}

TEST_CASE("confined transcripts offer the extractor nothing to work with") {
    SyntheticLinreg s = synthetic_linreg(30, 4, 0.1, 83);
    CgdConfig cfg;
    cfg.plan = make_partition(30, 4, 3, 1);
    cfg.loss = LossKind::MeanSquaredError;
    cfg.schedule = RateSchedule::fixed(0.01);
    cfg.seed = 83;
    SessionConfig scfg;
    scfg.seed = 83;
    LocalExecutor ex({0, 1, 2}, scfg, /*record=*/true);
    CgdSession sess(ex, s.data, cfg);
    for (int k = 0; k < 10; ++k) sess.step();

    for (const auto& [id, t] : ex.transcripts()) {
        auto obs = model_broadcast_observations(t, scfg.codec, cfg.schedule);
        CHECK(obs.empty());
        CHECK_THROWS_AS(leakage_extract_linreg(obs), PrivacyError);
    }
}
