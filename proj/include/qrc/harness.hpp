#pragma once

// Config-driven experiment runner. A config expands into cells (one model
// configuration each); every cell evaluates all targets of the task and
// yields tidy result rows.

#include "qrc/esn.hpp"
#include "qrc/learning.hpp"
#include "qrc/readout.hpp"
#include "qrc/reservoir.hpp"
#include "qrc/spin_system.hpp"
#include "qrc/tasks.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qrc {

enum class TaskKind { narma, stm, weather };

struct TaskConfig {
    TaskKind kind = TaskKind::narma;
    // narma
    std::vector<int> orders;
    bool rescale = true;
    SineParams sine;
    // stm
    int max_delay = 100;
    std::vector<int> trace_delays{0, 1, 5, 10};
    // weather
    std::string weather_path;
    std::vector<int> horizons;
    // split after the washout; for weather the test part is whatever remains
    Eigen::Index train = 400;
    Eigen::Index test = 100;
    Eigen::Index weather_washout = 374;
};

/// Washout for one tau: a fixed value, or "auto" = max(ceil(10 / tau), max_delay).
struct WashoutRule {
    std::vector<int> values;   ///< empty means auto; one value or one per tau
};

struct QrcConfig {
    std::vector<double> tau{0.3};
    WashoutRule washout;
    std::vector<InputAssignment> inputs;
    /// "single_time", "time_multiplexed" or "full_pauli"
    std::vector<std::string> readouts{"single_time"};
    std::string readout_channel = "proton";
    std::vector<RelaxationModel> relaxation{RelaxationModel::full};
    Protocol protocol = Protocol::single_pass;
    EvolutionEngine engine = EvolutionEngine::propagator;
    double noise_sigma = 0.0;
    FidSettings fid;
};

struct ClassicalConfig {
    std::vector<std::string> readouts{"single_time", "time_multiplexed"};
    bool polarization_scaled = false;
};

struct EsnGridPoint {
    int nodes = 500;
    double connectivity = 0.025;
    double spectral_radius = 0.99;
};

struct EsnConfig {
    std::vector<EsnGridPoint> grid{{500, 0.025, 0.99}};
    int realizations = 10;
    /// Washout for ESN runs; negative means the quantum path's first washout.
    int washout = -1;
};

struct ExperimentConfig {
    std::string name;
    std::string molecule;
    std::string base_dir;   ///< relative paths resolve against this
    std::string output_dir;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::string> models{"qrc"};
    QrcConfig qrc;
    ClassicalConfig classical;
    EsnConfig esn;
    TaskConfig task;
    FitOptions learning;
    bool write_traces = true;
    int max_spins = kDefaultMaxSpins;
    std::string canonical;  ///< normalized JSON used for hashing

    std::string resolve(const std::string& path) const;
};

/// Parses the JSON config; throws ConfigError listing every problem found.
ExperimentConfig parse_experiment(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_experiment(const std::string& path);

struct CellSpec {
    std::string id;
    std::string model;   ///< qrc, classical, esn, persistence
    double tau = 0.0;
    int washout = 0;
    std::string readout;
    RelaxationModel relaxation = RelaxationModel::full;
    EsnGridPoint esn;
    std::uint64_t seed = 0;
};

std::vector<CellSpec> expand_cells(const ExperimentConfig& config);

struct ResultRecord {
    std::string cell_id;
    std::string task_id;
    std::string metric;   ///< R2, NMSE, C_td, C_STM
    double value = 0.0;
    std::uint64_t seed = 0;
};

struct Trace {
    std::string name;
    std::vector<Eigen::Index> step;
    std::vector<double> y;
    std::vector<double> yhat;
};

struct CellOutput {
    std::vector<ResultRecord> records;
    std::vector<Trace> traces;
    bool ok = true;
    std::string error;
    double runtime_s = 0.0;
};

/// Runs one cell; exceptions are captured in the output.
CellOutput run_cell(const ExperimentConfig& config, const CellSpec& cell);

struct RunOptions {
    std::string only;
    int workers = 1;
    std::optional<std::uint64_t> seed_override;
    /// Overrides QRC_OUTPUT_ROOT when non-empty.
    std::string output_root;
};

struct RunSummary {
    std::size_t cells = 0;
    std::size_t failed = 0;
    std::string output_dir;
};

/// Executes every cell on a bounded worker pool and writes results.csv,
/// timings.csv, manifest.json and traces/ under the output directory.
RunSummary run_experiment(ExperimentConfig config, const RunOptions& options = {});

struct ValidationReport {
    std::vector<std::string> issues;
    std::size_t cells = 0;
    std::size_t evolve_calls = 0;
    bool expensive = false;
};

inline constexpr std::size_t kExpensiveEvolveCalls = 100'000;

/// Dry run: parse, resolve files, check invariants and estimate cost.
ValidationReport validate_experiment(const std::string& path);
ValidationReport validate_experiment_text(const std::string& text, const std::string& base_dir = ".");

std::uint64_t fnv1a64(const std::string& data);
std::string format_double(double v);

// -- shared evaluation path -------------------------------------------------

/// One regression target indexed by input step; NaN entries are undefined.
struct TaskTarget {
    std::string id;
    RVector values;
    Eigen::Index train_begin = 0, train_end = 0, test_begin = 0, test_end = 0;
    std::vector<std::string> metrics;
    bool trace = true;
};

/// Fits one multitask readout per distinct (train, test) range group on rows
/// of `features` (row r is input step first_step + r) and scores the test range.
void evaluate_targets(const FeatureMatrix& features, Eigen::Index first_step, const std::vector<TaskTarget>& targets,
                      const FitOptions& fit, const CellSpec& cell, CellOutput& out, bool write_traces);

} // namespace qrc
