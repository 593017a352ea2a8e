#pragma once

// Classical-vector counterpart of the spin reservoir: every spin is a vector
// (Sx, Sy, Sz) precessing in the field of its neighbours' Sz.

#include "qrc/readout.hpp"
#include "qrc/reservoir.hpp"
#include "qrc/spin_system.hpp"
#include "qrc/types.hpp"

#include <span>
#include <vector>

namespace qrc {

/// Layout (Sx, Sy, Sz) per spin, length 3N.
using ClassicalSpinState = RVector;

struct ClassicalOptions {
    /// Relax Sz toward the spin polarization instead of 1.
    bool polarization_scaled = false;
    /// propagator: closed-form solution (Sz relaxes on its own, the phase is its integral); rk4: stepped
    EvolutionEngine engine = EvolutionEngine::propagator;
    double max_step = 1e-4;
    /// RK4 per-step local error target, tightens the step for fast precession
    double step_tolerance = 1e-12;
};

/// Omega_i = 2 pi nu_i + 2 pi sum_{j != i} J_ij Sz_j, rad/s.
RVector classical_frequencies(const ClassicalSpinState& state, const SpinSystem& system);

/// dSx = -Omega Sy - Sx/T2, dSy = Omega Sx - Sy/T2, dSz = (eq - Sz)/T1.
ClassicalSpinState classical_rhs(const ClassicalSpinState& state, const SpinSystem& system,
                                 const ClassicalOptions& options = {});

namespace reference {
/// Cross-product form dS/dt = B x S plus relaxation, B = (0, 0, Omega).
ClassicalSpinState classical_rhs_cross(const ClassicalSpinState& state, const SpinSystem& system,
                                       const ClassicalOptions& options = {});
} // namespace reference

/// Rotation of one spin vector about an axis tilted from x toward z, matching
/// the sense of rotation_gate: (0, 0, 1) goes to (0, -1, 0) at theta = pi/2.
void classical_rotate(ClassicalSpinState& state, int spin, double theta, double tilt = 0.0);

/// Closed form by default. RK4 uses h = min(duration/100, max_step, (120 tol)^(1/5) / omega_max).
ClassicalSpinState classical_evolve(const ClassicalSpinState& state, const SpinSystem& system, double duration,
                                    const ClassicalOptions& options = {});

/// All vectors along +z (scaled by the polarization when requested).
ClassicalSpinState classical_equilibrium(const SpinSystem& system, const ClassicalOptions& options = {});

class ClassicalReservoir {
public:
    ClassicalReservoir(SpinSystem system, ReservoirConfig config, ClassicalOptions options = {});

    const SpinSystem& system() const { return system_; }
    const ReservoirConfig& config() const { return config_; }

    ClassicalSpinState initial_state() const { return classical_equilibrium(system_, options_); }
    /// Rotates every input-channel spin by the encoded angle, then evolves over tau.
    ClassicalSpinState step(const ClassicalSpinState& state, std::span<const double> input) const;

private:
    SpinSystem system_;
    ReservoirConfig config_;
    ClassicalOptions options_;
};

/// Bias followed by the 3N components.
RVector classical_components(const ClassicalSpinState& state);

/// Time-multiplexed classical readout: pi/2 pulse about x on the channel
/// spins, then S(t) = sum_i (Sx - i Sy)/2 exp(-i Omega_i t - t/T2) with the
/// longitudinal field frozen during acquisition, transformed and cut to regions.
class ClassicalSpectralReadout {
public:
    ClassicalSpectralReadout(const SpinSystem& system, const std::string& channel, const FidSettings& settings);

    const std::vector<FrequencyRegion>& regions() const { return regions_; }
    FidSignal fid(const ClassicalSpinState& state) const;
    RVector operator()(const ClassicalSpinState& state) const;

private:
    SpinSystem system_;
    std::string channel_;
    FidSettings settings_;
    std::vector<FrequencyRegion> regions_;
};

/// Windows [nu_i - sum_j |J_ij| - w, nu_i + sum_j |J_ij| + w] over the channel spins, merged.
std::vector<FrequencyRegion> classical_regions(const SpinSystem& system, const std::string& channel,
                                               double half_width_hz);

using ClassicalReadoutFn = std::function<RVector(const ClassicalSpinState&)>;

/// Single pass from equilibrium with washout, one feature row per post-washout step.
FeatureMatrix run_classical(const InputSeries& inputs, const ClassicalReservoir& reservoir,
                            const ClassicalReadoutFn& readout);

} // namespace qrc
