#pragma once

// Experiment runner behind the command-line tool. A run is described by a
// flat key-value config (file keys and CLI flags share the same names),
// resolved against a named profile, and executed in one of five modes:
// the confined protocol, centralized descent, isolated local training, or
// federated SGD in plain / secure-aggregation flavours. Metrics land in a
// CSV whose every column except wall-clock ms is a pure function of
// (config, seed) on the local transport; the resolved config rides along
// as a comment block so an artifact is reproducible from its own header.
//
// Participant actors run wherever the transport puts them (in-process bus
// or one thread per TCP node); metric rows are only ever appended by the
// driver thread, so collection needs no locking.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgd/data_plane.hpp"
#include "cgd/engine.hpp"

namespace cgd {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class RunMode { Cgd, Centralized, Local, FedsgdPlain, FedsgdSecure };

// Initial weight scale: one value for everyone, an explicit list in
// participant order, or per-participant draws from uniform(lo, hi).
struct DeltaSpec {
    enum class Kind { Scalar, PerParticipant, UniformRandom };

    Kind kind = Kind::Scalar;
    double value = 0.1;
    std::vector<double> per_participant;
    double lo = 0.0;
    double hi = 0.0;

    // m scales in participant order; UniformRandom deterministically from a
    // dedicated substream of `seed`.
    std::vector<double> resolve(size_t m, uint64_t seed) const;
};

struct RunConfig {
    RunMode mode = RunMode::Cgd;
    size_t m_h = 2;
    size_t m_v = 1;
    DeltaSpec delta;
    double alpha = 0.01;
    bool diminishing = false;  // alpha / (k + mu*T)^2 instead of fixed alpha
    double mu = 0.0;
    uint32_t iters = 100;
    std::vector<Eigen::Index> hidden;  // empty = linear model
    LossKind loss = LossKind::MeanSquaredError;
    std::string dataset = "synth";  // synth | mnist
    std::string mnist_dir = "data/mnist";
    Eigen::Index n_train = 1000;
    Eigen::Index n_val = 200;
    Eigen::Index synth_d = 20;
    double synth_noise = 0.1;
    std::string transport = "local";  // local | tcp
    std::string endpoints;            // id/host/port file, tcp only
    uint64_t seed = 1;
    int frac_bits = 16;
    uint32_t eval_every = 10;
    std::string out;      // CSV destination; empty = caller decides
    std::string profile;  // "", desk, paper
};

// Flat "key = value" lines; blank lines and '#' comments ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Built-in defaults, then the profile preset, then the explicit keys.
// Validation complaints are collected per field and thrown together.
RunConfig resolve_config(const std::map<std::string, std::string>& kv);

// Canonical "key = value" lines for every effective field, in a fixed
// order; the provenance block embedded at the top of each CSV.
std::vector<std::string> render_config(const RunConfig& cfg);

struct MetricsRecord {
    uint32_t iter = 0;
    std::string participant;  // grid id, or "central" for single-model modes
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;  // NaN for squared-error runs
    long long ms = 0;      // wall clock since run start
};

struct RunReport {
    std::vector<std::string> config_lines;
    std::vector<MetricsRecord> records;  // sorted by (iter, participant)
    std::string worst_participant;       // at the final evaluation
    double worst_val_loss = 0.0;
    double worst_val_acc = 0.0;
    double final_train_loss = 0.0;
    long long elapsed_ms = 0;
    std::string summary;  // one-line JSON-like record
};

// Executes the configured mode, evaluating at every eval-every-th iteration
// and at the last one. Confined runs report each participant's assembled
// row prediction; the summary carries the worst participant's final
// metrics (lowest accuracy, or highest validation loss for regression).
RunReport run(const RunConfig& cfg);

// Provenance comment block, the documented header, one line per record.
// with_timing=false zeroes the ms column, which is the only one that is
// not byte-reproducible for a fixed (config, seed).
void write_csv(std::ostream& os, const RunReport& report, bool with_timing = true);

struct SweepEntry {
    std::string value;
    bool ok = false;
    std::string error;  // set when the run failed; the sweep continues
    RunReport report;
};

// One run per value over axis in {delta | mu | grid}, all sharing the base
// seed. A mu sweep switches the schedule to diminishing, where mu has a
// meaning. An empty value list yields no runs (and an empty CSV).
std::vector<SweepEntry> sweep(const std::map<std::string, std::string>& base,
                              const std::string& axis, const std::vector<std::string>& values);

// Single header, then each run's config block and rows in sweep order.
void write_sweep_csv(std::ostream& os, const std::string& axis,
                     const std::vector<SweepEntry>& entries, bool with_timing = true);

}  // namespace cgd
