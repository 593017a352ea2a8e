#pragma once

// Input encoding and the reservoir update
//   rho_k = exp(tau L) [ U(s_k) rho_{k-1} U(s_k)^dagger ]
// together with the single-pass and rewinding trajectory protocols.

#include "qrc/density_matrix.hpp"
#include "qrc/lindblad.hpp"
#include "qrc/spin_system.hpp"
#include "qrc/types.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qrc {

/// Map from a normalized input in [0, 1] to a rotation angle.
enum class AngleMap {
    arcsin,   ///< theta = arcsin(s)
    linear,   ///< theta = s * pi / 2
};

struct InputAssignment {
    std::string channel;
    AngleMap map = AngleMap::arcsin;
    /// Fixed tilt of the rotation axis from x toward z (pulse off-resonance), radians.
    double tilt = 0.0;
};

enum class ReadoutScheme { single_time, time_multiplexed };
enum class Protocol { single_pass, rewinding };
/// How the free evolution over tau is carried out.
enum class EvolutionEngine {
    propagator,   ///< exact channel computed once per tau
    rk4,          ///< fixed-step Runge-Kutta per interval
};

struct ReservoirConfig {
    double tau = 0.3;
    std::vector<InputAssignment> inputs;
    int n_washout = 0;
    ReadoutScheme readout = ReadoutScheme::single_time;
    Protocol protocol = Protocol::single_pass;
    EvolutionEngine engine = EvolutionEngine::propagator;
    StepControl step_control{};

    void validate(const SpinSystem& system) const;
};

double input_angle(double normalized, AngleMap map);

/// Product of same-axis rotations, one per channel spin, for each assignment.
/// Throws InvariantError if an input lies outside [0, 1].
LocalUnitary encode_input_local(std::span<const double> normalized, const ReservoirConfig& config,
                                const SpinSystem& system);
CMatrix encode_input(std::span<const double> normalized, const ReservoirConfig& config, const SpinSystem& system);

/// Rows are time steps, columns input channels.
using InputSeries = RMatrix;
/// Rows are post-washout time steps, columns features.
using FeatureMatrix = RMatrix;
using ReadoutFn = std::function<RVector(const DensityMatrix&)>;

/// A configured reservoir. Immutable apart from the evolve-call counter, so
/// one instance can drive several trajectories concurrently.
class Reservoir {
public:
    Reservoir(SpinSystem system, ReservoirConfig config);

    const SpinSystem& system() const { return system_; }
    const ReservoirConfig& config() const { return config_; }
    const LindbladModel& model() const { return *model_; }

    /// The thermal state of the system.
    DensityMatrix initial_state() const { return thermal_state(system_); }

    /// Free evolution over one input interval.
    DensityMatrix free_evolution(const DensityMatrix& rho) const;
    /// One input-then-evolve cycle.
    DensityMatrix step(const DensityMatrix& rho, std::span<const double> input) const;

    std::size_t evolve_calls() const { return evolve_calls_.load(); }
    void reset_counter() const { evolve_calls_ = 0; }

private:
    SpinSystem system_;
    ReservoirConfig config_;
    std::unique_ptr<LindbladModel> model_;
    std::unique_ptr<Propagator> propagator_;
    mutable std::atomic<std::size_t> evolve_calls_{0};
};

/// Iterates `step` over every input once from `initial`, reading out after
/// each step past the washout prefix.
FeatureMatrix run_single_pass(const InputSeries& inputs, const DensityMatrix& initial, const Reservoir& reservoir,
                              const ReadoutFn& readout);

/// Separate re-run from the thermal state for every output step k, replaying
/// inputs k - n_wo .. k and reading out once at the end.
FeatureMatrix run_rewinding(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout);

/// Dispatches on the configured protocol; single-pass starts at the thermal state.
FeatureMatrix run_protocol(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout);

struct WashoutEstimate {
    int n_washout = 0;
    double max_difference = 0.0;
    bool converged = false;
};

/// Doubles n_wo from `start` until readouts of two trajectories started from
/// distinct random states agree to `tolerance`, or `limit` is passed.
WashoutEstimate estimate_washout(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout,
                                 double tolerance, std::uint64_t seed, int start = 1, int limit = 1 << 14);

/// Evolve calls needed by a protocol for `length` inputs.
std::size_t protocol_cost(Protocol protocol, std::size_t length, int n_washout);

} // namespace qrc
