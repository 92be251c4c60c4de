#include "cgd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "cgd/baselines.hpp"
#include "cgd/fnn.hpp"
#include "cgd/ring.hpp"
#include "cgd/tcp.hpp"

namespace cgd {

namespace {

constexpr uint32_t kDeltaSalt = 0xDE17;

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t from = 0;
    while (true) {
        size_t at = s.find(sep, from);
        out.push_back(trim(s.substr(from, at - from)));
        if (at == std::string::npos) break;
        from = at + 1;
    }
    return out;
}

// Shortest representation that round-trips a double; NaN normalized so the
// CSV is stable across libc flavours.
std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string fmt_json(double v) {
    return std::isnan(v) ? "null" : fmt(v);
}

const char* mode_name(RunMode m) {
    switch (m) {
        case RunMode::Cgd: return "cgd";
        case RunMode::Centralized: return "centralized";
        case RunMode::Local: return "local";
        case RunMode::FedsgdPlain: return "fedsgd-plain";
        case RunMode::FedsgdSecure: return "fedsgd-secure";
    }
    return "?";
}

std::map<std::string, std::string> profile_preset(const std::string& name) {
    if (name == "desk")
        return {{"dataset", "mnist"}, {"n-train", "6000"}, {"n-val", "1000"}, {"hidden", "64"},
                {"iters", "1000"},    {"alpha", "0.01"},   {"eval-every", "100"}};
    if (name == "paper")
        return {{"dataset", "mnist"}, {"n-train", "60000"}, {"n-val", "10000"}, {"hidden", "256"},
                {"iters", "2000"},    {"alpha", "0.01"},    {"eval-every", "100"}};
    throw ConfigError("profile: unknown preset '" + name + "' (want desk or paper)");
}

struct Split {
    Dataset train;
    Dataset val;
};

Split load_split(const RunConfig& cfg) {
    Split sp;
    if (cfg.dataset == "synth") {
        SyntheticLinreg s =
            synthetic_linreg(cfg.n_train + cfg.n_val, cfg.synth_d, cfg.synth_noise, cfg.seed);
        sp.train = {s.data.x.topRows(cfg.n_train), s.data.y.topRows(cfg.n_train), "synth"};
        sp.val = {s.data.x.bottomRows(cfg.n_val), s.data.y.bottomRows(cfg.n_val), "synth-val"};
        return sp;
    }
    Dataset tr = load_mnist(cfg.mnist_dir + "/train-images-idx3-ubyte",
                            cfg.mnist_dir + "/train-labels-idx1-ubyte");
    Dataset te = load_mnist(cfg.mnist_dir + "/t10k-images-idx3-ubyte",
                            cfg.mnist_dir + "/t10k-labels-idx1-ubyte");
    if (tr.n() < cfg.n_train)
        throw ConfigError("n-train: " + cfg.mnist_dir + " holds only " + std::to_string(tr.n()) +
                          " training samples");
    if (te.n() < cfg.n_val)
        throw ConfigError("n-val: " + cfg.mnist_dir + " holds only " + std::to_string(te.n()) +
                          " held-out samples");
    sp.train = head(shuffle_rows(tr, cfg.seed), cfg.n_train);
    sp.val = head(te, cfg.n_val);
    return sp;
}

struct EvalPoint {
    double loss = std::numeric_limits<double>::quiet_NaN();
    double acc = std::numeric_limits<double>::quiet_NaN();
};

EvalPoint eval_pred(const Matrix& pred, const Matrix& y, LossKind loss) {
    EvalPoint p;
    p.loss = loss_value(pred, y, loss);
    if (loss == LossKind::CrossEntropySoftmax) p.acc = accuracy(pred, y);
    return p;
}

EvalPoint eval_layers(const std::vector<Matrix>& layers, const Matrix& x, const Matrix& y,
                      LossKind loss) {
    return eval_pred(forward_fc(x, layers, activations_for(layers.size(), loss)).a.back(), y,
                     loss);
}

std::unique_ptr<RoundExecutor> make_executor(const RunConfig& cfg, size_t m) {
    SessionConfig scfg;
    scfg.codec = FixedPointCodec(cfg.frac_bits, 64.0);
    scfg.seed = cfg.seed;
    if (cfg.transport == "tcp") {
        std::vector<TcpEndpointSpec> specs = parse_endpoints_file(cfg.endpoints);
        if (specs.size() != m)
            throw ConfigError("endpoints: file lists " + std::to_string(specs.size()) +
                              " nodes, the grid needs " + std::to_string(m));
        return std::make_unique<TcpExecutor>(specs, scfg);
    }
    std::vector<uint16_t> ids;
    for (size_t i = 0; i < m; ++i) ids.push_back(uint16_t(i));
    return std::make_unique<LocalExecutor>(ids, scfg);
}

long long participant_key(const std::string& p) {
    return p == "central" ? -1 : std::stoll(p);
}

}  // namespace

std::vector<double> DeltaSpec::resolve(size_t m, uint64_t seed) const {
    switch (kind) {
        case Kind::Scalar:
            return std::vector<double>(m, value);
        case Kind::PerParticipant:
            if (per_participant.size() != m)
                throw ConfigError("delta: " + std::to_string(per_participant.size()) +
                                  " scales listed for " + std::to_string(m) + " participants");
            return per_participant;
        case Kind::UniformRandom: {
            std::mt19937_64 rng = substream(seed, 0, 0, kDeltaSalt);
            std::uniform_real_distribution<double> draw(lo, hi);
            std::vector<double> out(m);
            for (double& v : out) v = draw(rng);
            return out;
        }
    }
    return {};
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

RunConfig resolve_config(const std::map<std::string, std::string>& kv_in) {
    static const std::set<std::string> known{
        "mode",      "grid",    "delta",   "delta-random", "alpha",      "schedule",
        "mu",        "iters",   "hidden",  "loss",         "dataset",    "mnist-dir",
        "n-train",   "n-val",   "synth-d", "synth-noise",  "transport",  "endpoints",
        "seed",      "frac-bits", "eval-every", "out",     "profile"};

    std::vector<std::string> errors;
    auto fail = [&](const std::string& field, const std::string& why) {
        errors.push_back(field + ": " + why);
    };

    std::map<std::string, std::string> kv;
    auto pi = kv_in.find("profile");
    if (pi != kv_in.end() && !trim(pi->second).empty()) {
        try {
            kv = profile_preset(trim(pi->second));
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    for (const auto& [k, v] : kv_in) kv[trim(k)] = trim(v);
    for (const auto& [k, v] : kv)
        if (!known.count(k)) fail(k, "unknown key");

    RunConfig cfg;
    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };

    auto number = [&](const std::string& field, const std::string& text) -> std::optional<double> {
        try {
            size_t pos = 0;
            double d = std::stod(text, &pos);
            if (pos == text.size() && std::isfinite(d)) return d;
        } catch (...) {
        }
        fail(field, "not a number: '" + text + "'");
        return std::nullopt;
    };
    auto count_in = [&](const char* key, auto& dst, long long lo, long long hi) {
        if (auto v = get(key)) {
            auto d = number(key, *v);
            if (!d) return;
            if (*d < double(lo) || *d > double(hi) || *d != std::floor(*d))
                fail(key, "want an integer in [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "], got '" + *v + "'");
            else
                dst = static_cast<std::decay_t<decltype(dst)>>(*d);
        }
    };

    if (auto v = get("mode")) {
        if (*v == "cgd")
            cfg.mode = RunMode::Cgd;
        else if (*v == "centralized")
            cfg.mode = RunMode::Centralized;
        else if (*v == "local")
            cfg.mode = RunMode::Local;
        else if (*v == "fedsgd-plain")
            cfg.mode = RunMode::FedsgdPlain;
        else if (*v == "fedsgd-secure")
            cfg.mode = RunMode::FedsgdSecure;
        else
            fail("mode", "unknown value '" + *v +
                             "' (want cgd|centralized|local|fedsgd-plain|fedsgd-secure)");
    }

    if (auto v = get("grid")) {
        size_t at = v->find_first_of("xX");
        bool ok = at != std::string::npos && at > 0 && at + 1 < v->size();
        if (ok) {
            auto h = number("grid", v->substr(0, at));
            auto w = number("grid", v->substr(at + 1));
            ok = h && w && *h >= 1 && *w >= 1 && *h == std::floor(*h) && *w == std::floor(*w);
            if (ok) {
                cfg.m_h = size_t(*h);
                cfg.m_v = size_t(*w);
                if (cfg.m_h * cfg.m_v > 65535)
                    fail("grid", "at most 65535 participants fit the 16-bit wire ids");
            }
        }
        if (!ok) fail("grid", "want MHxMV with both at least 1, got '" + *v + "'");
    }

    bool has_delta = kv.count("delta") != 0;
    bool has_rand = kv.count("delta-random") != 0;
    if (has_delta && has_rand) {
        fail("delta", "give either delta or delta-random, not both");
    } else if (has_rand) {
        const std::string& v = kv.at("delta-random");
        size_t at = v.find(':');
        bool ok = at != std::string::npos;
        if (ok) {
            auto lo = number("delta-random", v.substr(0, at));
            auto hi = number("delta-random", v.substr(at + 1));
            ok = lo && hi && *lo > 0.0 && *lo < *hi;
            if (ok) {
                cfg.delta.kind = DeltaSpec::Kind::UniformRandom;
                cfg.delta.lo = *lo;
                cfg.delta.hi = *hi;
            }
        }
        if (!ok) fail("delta-random", "want LO:HI with 0 < LO < HI, got '" + v + "'");
    } else if (has_delta) {
        std::vector<std::string> parts = split_list(kv.at("delta"), ',');
        std::vector<double> vals;
        for (const std::string& p : parts) {
            auto d = number("delta", p);
            if (!d) break;
            if (*d <= 0.0) {
                fail("delta", "scales must be positive, got '" + p + "'");
                break;
            }
            vals.push_back(*d);
        }
        if (vals.size() == parts.size()) {
            if (vals.size() == 1) {
                cfg.delta.kind = DeltaSpec::Kind::Scalar;
                cfg.delta.value = vals[0];
            } else {
                cfg.delta.kind = DeltaSpec::Kind::PerParticipant;
                cfg.delta.per_participant = vals;
            }
        }
    }

    if (auto v = get("alpha")) {
        auto d = number("alpha", *v);
        if (d && *d > 0.0)
            cfg.alpha = *d;
        else if (d)
            fail("alpha", "must be positive");
    }
    if (auto v = get("schedule")) {
        if (*v == "fixed")
            cfg.diminishing = false;
        else if (*v == "diminishing")
            cfg.diminishing = true;
        else
            fail("schedule", "want fixed or diminishing, got '" + *v + "'");
    }
    if (auto v = get("mu")) {
        auto d = number("mu", *v);
        if (d && *d >= 0.0 && *d < 1.0)
            cfg.mu = *d;
        else if (d)
            fail("mu", "want a value in [0, 1)");
    }
    // alpha/(k + 0*T)^2 is not what the experiments mean by mu = 0: that
    // setting stands for a fixed rate, so normalize it to one.
    if (cfg.diminishing && cfg.mu == 0.0) cfg.diminishing = false;
    count_in("iters", cfg.iters, 1, std::numeric_limits<int32_t>::max());
    count_in("n-train", cfg.n_train, 1, 1 << 26);
    count_in("n-val", cfg.n_val, 1, 1 << 26);
    count_in("synth-d", cfg.synth_d, 1, 1 << 20);
    count_in("frac-bits", cfg.frac_bits, 8, 24);
    count_in("eval-every", cfg.eval_every, 1, std::numeric_limits<int32_t>::max());
    if (auto v = get("seed")) {
        try {
            size_t pos = 0;
            cfg.seed = std::stoull(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
        } catch (...) {
            fail("seed", "not an unsigned integer: '" + *v + "'");
        }
    }
    if (auto v = get("synth-noise")) {
        auto d = number("synth-noise", *v);
        if (d && *d >= 0.0)
            cfg.synth_noise = *d;
        else if (d)
            fail("synth-noise", "must be nonnegative");
    }

    if (auto v = get("hidden")) {
        cfg.hidden.clear();
        if (!v->empty())
            for (const std::string& p : split_list(*v, ',')) {
                auto d = number("hidden", p);
                if (!d) break;
                if (*d < 1 || *d != std::floor(*d)) {
                    fail("hidden", "widths must be positive integers, got '" + p + "'");
                    break;
                }
                cfg.hidden.push_back(Eigen::Index(*d));
            }
    }

    if (auto v = get("dataset")) {
        if (*v == "synth" || *v == "mnist")
            cfg.dataset = *v;
        else
            fail("dataset", "want synth or mnist, got '" + *v + "'");
    }
    if (auto v = get("mnist-dir")) cfg.mnist_dir = *v;
    if (auto v = get("out")) cfg.out = *v;
    if (auto v = get("profile")) cfg.profile = *v;

    cfg.loss = cfg.dataset == "mnist" ? LossKind::CrossEntropySoftmax
                                      : LossKind::MeanSquaredError;
    if (auto v = get("loss")) {
        if (*v == "mse")
            cfg.loss = LossKind::MeanSquaredError;
        else if (*v == "ce")
            cfg.loss = LossKind::CrossEntropySoftmax;
        else
            fail("loss", "want mse or ce, got '" + *v + "'");
    }
    if (cfg.loss == LossKind::CrossEntropySoftmax && cfg.dataset == "synth")
        fail("loss", "ce needs one-hot labels; the synthetic dataset is regression");

    if (auto v = get("transport")) {
        if (*v == "local" || *v == "tcp")
            cfg.transport = *v;
        else
            fail("transport", "want local or tcp, got '" + *v + "'");
    }
    if (auto v = get("endpoints")) cfg.endpoints = *v;
    bool uses_wire = cfg.mode == RunMode::Cgd || cfg.mode == RunMode::FedsgdPlain ||
                     cfg.mode == RunMode::FedsgdSecure;
    if (cfg.transport == "tcp" && uses_wire && cfg.endpoints.empty())
        fail("endpoints", "required for the tcp transport");

    if (cfg.mode != RunMode::Cgd && cfg.delta.kind != DeltaSpec::Kind::Scalar)
        fail("delta", "per-participant scales apply to cgd mode only");
    if (cfg.delta.kind == DeltaSpec::Kind::PerParticipant &&
        cfg.delta.per_participant.size() != cfg.m_h * cfg.m_v)
        fail("delta", std::to_string(cfg.delta.per_participant.size()) + " scales listed for a " +
                          std::to_string(cfg.m_h) + "x" + std::to_string(cfg.m_v) + " grid");
    if ((cfg.mode == RunMode::FedsgdPlain || cfg.mode == RunMode::FedsgdSecure) && cfg.m_v > 1)
        fail("grid", "federated SGD is a horizontal baseline; m_v must be 1");

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

std::vector<std::string> render_config(const RunConfig& cfg) {
    std::vector<std::string> out;
    auto put = [&](const std::string& k, const std::string& v) { out.push_back(k + " = " + v); };

    put("mode", mode_name(cfg.mode));
    if (!cfg.profile.empty()) put("profile", cfg.profile);
    put("dataset", cfg.dataset);
    if (cfg.dataset == "mnist") put("mnist-dir", cfg.mnist_dir);
    put("n-train", std::to_string(cfg.n_train));
    put("n-val", std::to_string(cfg.n_val));
    if (cfg.dataset == "synth") {
        put("synth-d", std::to_string(cfg.synth_d));
        put("synth-noise", fmt(cfg.synth_noise));
    }
    put("loss", cfg.loss == LossKind::CrossEntropySoftmax ? "ce" : "mse");
    std::string widths;
    for (size_t i = 0; i < cfg.hidden.size(); ++i)
        widths += (i ? "," : "") + std::to_string(cfg.hidden[i]);
    put("hidden", widths);
    put("grid", std::to_string(cfg.m_h) + "x" + std::to_string(cfg.m_v));
    switch (cfg.delta.kind) {
        case DeltaSpec::Kind::Scalar:
            put("delta", fmt(cfg.delta.value));
            break;
        case DeltaSpec::Kind::PerParticipant: {
            std::string list;
            for (size_t i = 0; i < cfg.delta.per_participant.size(); ++i)
                list += (i ? "," : "") + fmt(cfg.delta.per_participant[i]);
            put("delta", list);
            break;
        }
        case DeltaSpec::Kind::UniformRandom:
            put("delta-random", fmt(cfg.delta.lo) + ":" + fmt(cfg.delta.hi));
            break;
    }
    put("alpha", fmt(cfg.alpha));
    put("schedule", cfg.diminishing ? "diminishing" : "fixed");
    if (cfg.diminishing) put("mu", fmt(cfg.mu));
    put("iters", std::to_string(cfg.iters));
    put("seed", std::to_string(cfg.seed));
    put("frac-bits", std::to_string(cfg.frac_bits));
    put("eval-every", std::to_string(cfg.eval_every));
    put("transport", cfg.transport);
    if (cfg.transport == "tcp") put("endpoints", cfg.endpoints);
    return out;
}

RunReport run(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    auto ms_now = [t0]() -> long long {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };
    auto should_eval = [&](uint32_t k) { return k % cfg.eval_every == 0 || k == cfg.iters; };

    Split sp = load_split(cfg);
    Eigen::Index outputs = sp.train.y.cols();
    RateSchedule schedule = cfg.diminishing
                                ? RateSchedule::diminishing(cfg.alpha, cfg.mu, cfg.iters)
                                : RateSchedule::fixed(cfg.alpha);

    RunReport rep;
    rep.config_lines = render_config(cfg);

    switch (cfg.mode) {
        case RunMode::Centralized: {
            centralized_train(sp.train, cfg.hidden, outputs, cfg.loss, schedule, cfg.iters,
                              cfg.delta.value, cfg.seed, 0,
                              [&](uint32_t k, const std::vector<Matrix>& layers) {
                                  if (!should_eval(k)) return;
                                  EvalPoint tr =
                                      eval_layers(layers, sp.train.x, sp.train.y, cfg.loss);
                                  EvalPoint va = eval_layers(layers, sp.val.x, sp.val.y, cfg.loss);
                                  rep.records.push_back(
                                      {k, "central", tr.loss, va.loss, va.acc, ms_now()});
                              });
            break;
        }
        case RunMode::FedsgdPlain:
        case RunMode::FedsgdSecure: {
            PartitionPlan plan = make_partition(sp.train.n(), sp.train.d(), cfg.m_h, cfg.m_v);
            std::unique_ptr<RoundExecutor> ex = make_executor(cfg, cfg.m_h * cfg.m_v);
            FedsgdOptions opts;
            opts.secure = cfg.mode == RunMode::FedsgdSecure;
            opts.delta = cfg.delta.value;
            opts.seed = cfg.seed;
            fedsgd_train(*ex, sp.train, plan, cfg.hidden, outputs, cfg.loss, schedule, cfg.iters,
                         opts, [&](uint32_t k, const std::vector<Matrix>& layers) {
                             if (!should_eval(k)) return;
                             EvalPoint tr = eval_layers(layers, sp.train.x, sp.train.y, cfg.loss);
                             EvalPoint va = eval_layers(layers, sp.val.x, sp.val.y, cfg.loss);
                             rep.records.push_back(
                                 {k, "central", tr.loss, va.loss, va.acc, ms_now()});
                         });
            break;
        }
        case RunMode::Local: {
            PartitionPlan plan = make_partition(sp.train.n(), sp.train.d(), cfg.m_h, cfg.m_v);
            std::vector<std::vector<Shard>> shards = apply_partition(sp.train, plan);
            local_train(sp.train, plan, cfg.hidden, outputs, cfg.loss, schedule, cfg.iters,
                        cfg.delta.value, cfg.seed,
                        [&](uint16_t id, uint32_t k, const std::vector<Matrix>& layers) {
                            if (!should_eval(k)) return;
                            GridId g = id_to_grid(id, plan.m_v);
                            const Shard& own = shards[g.i][g.j];
                            EvalPoint tr = eval_layers(layers, own.x, own.y, cfg.loss);
                            const RowRange& cols = plan.feature_ranges[g.j];
                            EvalPoint va =
                                eval_layers(layers, sp.val.x.middleCols(cols.begin, cols.size()),
                                            sp.val.y, cfg.loss);
                            rep.records.push_back(
                                {k, std::to_string(id), tr.loss, va.loss, va.acc, ms_now()});
                        });
            break;
        }
        case RunMode::Cgd: {
            PartitionPlan plan = make_partition(sp.train.n(), sp.train.d(), cfg.m_h, cfg.m_v);
            size_t m = cfg.m_h * cfg.m_v;
            std::unique_ptr<RoundExecutor> ex = make_executor(cfg, m);
            CgdConfig ccfg;
            ccfg.plan = plan;
            ccfg.hidden = cfg.hidden;
            ccfg.outputs = outputs;
            ccfg.loss = cfg.loss;
            ccfg.schedule = schedule;
            if (cfg.delta.kind == DeltaSpec::Kind::Scalar)
                ccfg.delta = cfg.delta.value;
            else
                ccfg.delta_per = cfg.delta.resolve(m, cfg.seed);
            ccfg.seed = cfg.seed;
            CgdSession sess(*ex, sp.train, ccfg);
            for (uint32_t k = 1; k <= cfg.iters; ++k) {
                sess.step();
                if (!should_eval(k)) continue;
                for (size_t i = 0; i < plan.m_h; ++i) {
                    EvalPoint tr =
                        eval_pred(grid_predict(sess.models(), plan, i, sp.train.x, cfg.loss),
                                  sp.train.y, cfg.loss);
                    EvalPoint va =
                        eval_pred(grid_predict(sess.models(), plan, i, sp.val.x, cfg.loss),
                                  sp.val.y, cfg.loss);
                    long long at = ms_now();
                    for (size_t j = 0; j < plan.m_v; ++j)
                        rep.records.push_back({k, std::to_string(grid_to_id({i, j}, plan.m_v)),
                                               tr.loss, va.loss, va.acc, at});
                }
            }
            break;
        }
    }

    std::stable_sort(rep.records.begin(), rep.records.end(),
                     [](const MetricsRecord& a, const MetricsRecord& b) {
                         return std::pair(a.iter, participant_key(a.participant)) <
                                std::pair(b.iter, participant_key(b.participant));
                     });

    bool ce = cfg.loss == LossKind::CrossEntropySoftmax;
    const MetricsRecord* worst = nullptr;
    for (const MetricsRecord& r : rep.records)
        if (r.iter == cfg.iters &&
            (!worst || (ce ? r.val_acc < worst->val_acc : r.val_loss > worst->val_loss)))
            worst = &r;
    if (worst) {
        rep.worst_participant = worst->participant;
        rep.worst_val_loss = worst->val_loss;
        rep.worst_val_acc = worst->val_acc;
        rep.final_train_loss = worst->train_loss;
    }
    rep.elapsed_ms = ms_now();

    std::ostringstream sum;
    sum << "{\"mode\":\"" << mode_name(cfg.mode) << "\",\"grid\":\"" << cfg.m_h << "x" << cfg.m_v
        << "\",\"iters\":" << cfg.iters << ",\"seed\":" << cfg.seed << ",\"worst_participant\":\""
        << rep.worst_participant << "\",\"train_loss\":" << fmt_json(rep.final_train_loss)
        << ",\"val_loss\":" << fmt_json(rep.worst_val_loss)
        << ",\"val_acc\":" << fmt_json(rep.worst_val_acc)
        << ",\"elapsed_ms\":" << rep.elapsed_ms << "}";
    rep.summary = sum.str();
    return rep;
}

static void write_block(std::ostream& os, const RunReport& rep, bool with_timing) {
    for (const std::string& line : rep.config_lines) os << "# " << line << "\n";
    for (const MetricsRecord& r : rep.records)
        os << r.iter << ',' << r.participant << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss)
           << ',' << fmt(r.val_acc) << ',' << (with_timing ? r.ms : 0) << "\n";
}

void write_csv(std::ostream& os, const RunReport& rep, bool with_timing) {
    os << "iter,participant,train_loss,val_loss,val_acc,ms\n";
    write_block(os, rep, with_timing);
}

std::vector<SweepEntry> sweep(const std::map<std::string, std::string>& base,
                              const std::string& axis, const std::vector<std::string>& values) {
    if (axis != "delta" && axis != "mu" && axis != "grid")
        throw ConfigError("axis: want delta, mu or grid, got '" + axis + "'");
    std::vector<SweepEntry> out;
    for (const std::string& v : values) {
        std::map<std::string, std::string> kv = base;
        if (axis == "delta") kv.erase("delta-random");
        kv[axis] = v;
        // mu only acts through the diminishing schedule.
        if (axis == "mu") kv["schedule"] = "diminishing";
        SweepEntry e;
        e.value = v;
        try {
            e.report = run(resolve_config(kv));
            e.ok = true;
        } catch (const std::exception& ex) {
            e.error = ex.what();
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_sweep_csv(std::ostream& os, const std::string& axis,
                     const std::vector<SweepEntry>& entries, bool with_timing) {
    os << "# sweep axis = " << axis << "\n";
    os << "iter,participant,train_loss,val_loss,val_acc,ms\n";
    for (const SweepEntry& e : entries) {
        if (!e.ok) {
            std::string flat = e.error;
            std::replace(flat.begin(), flat.end(), '\n', ';');
            os << "# " << axis << " = " << e.value << " FAILED: " << flat << "\n";
            continue;
        }
        write_block(os, e.report, with_timing);
    }
}

}  // namespace cgd
