#pragma once

// Static description of an NMR spin network: Zeeman frequencies, scalar
// couplings, relaxation times and equilibrium polarizations.

#include "qrc/types.hpp"

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qrc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Largest spin count accepted by the dense engines unless a caller raises it.
inline constexpr int kDefaultMaxSpins = 10;

/// Named subset of spin indices.
struct SpinGroup {
    std::string name;
    std::vector<int> spins;
};

struct SpinSystem {
    std::string name;
    int n_spins = 0;
    std::vector<std::string> labels;
    std::vector<std::string> nuclei;       ///< isotope tag per spin ("H", "C", "F", ...), may be empty
    std::vector<double> frequencies_hz;    ///< chemical shifts nu_i
    RMatrix couplings_hz;                  ///< symmetric J_ij, zero diagonal
    std::vector<double> t1_s;              ///< longitudinal relaxation, may be infinite
    std::vector<double> t2_s;              ///< transverse relaxation, may be infinite
    std::vector<double> polarizations;     ///< equilibrium p_i in [-1, 1]
    std::vector<SpinGroup> equivalence_groups;
    std::vector<SpinGroup> channels;

    std::size_t dim() const { return std::size_t{1} << n_spins; }

    /// Throws InvariantError describing the first violated invariant.
    void validate() const;

    bool has_channel(std::string_view name) const;
    const std::vector<int>& channel(std::string_view name) const;

    /// Equivalence groups restricted to a channel, in order of their first
    /// spin. Spins of the channel outside every group become singletons.
    std::vector<SpinGroup> readout_groups(std::string_view channel_name) const;

    /// 1/T_phi per spin: 1/T2 - 1/(2 T1); zero when dephasing vanishes.
    double pure_dephasing_rate(int spin) const;
};

/// Default equilibrium polarization for an isotope tag, or NaN when unknown.
double default_polarization(std::string_view nucleus);

/// Parse a molecule description (JSON text). Throws ConfigError on parse or
/// schema problems and InvariantError when the physics does not hold.
SpinSystem load_molecule(std::string_view config_text);

/// Read and parse a molecule file. "builtin:<name>" selects a shipped molecule.
SpinSystem load_molecule_file(const std::string& path);

/// Names accepted after "builtin:".
std::vector<std::string> builtin_molecule_names();
std::string builtin_molecule_text(std::string_view name);

/// The three-spin diethyl fluoromalonate sample (C, H, F).
SpinSystem diethyl_fluoromalonate();

/// Relaxation channels kept in a simulation; used by the relaxation ablation.
enum class RelaxationModel {
    full,              ///< amplitude damping and pure dephasing
    amplitude_only,    ///< T1 channels only, T_phi removed
    dephasing_only,    ///< T1 removed, coherences decay at 1/T2
    none,              ///< closed (unitary) system
};

RelaxationModel parse_relaxation_model(std::string_view text);
std::string to_string(RelaxationModel model);

/// Copy of `system` with relaxation channels removed according to `model`.
SpinSystem with_relaxation(const SpinSystem& system, RelaxationModel model);

/// Diagonal of the Ising Hamiltonian in the computational basis (rad/s).
/// Basis index bit (N-1-i) holds spin i; bit value 0 is sigma_z = +1.
struct DiagonalHamiltonian {
    std::vector<double> energies;
};

DiagonalHamiltonian build_hamiltonian(const SpinSystem& system, int max_spins = kDefaultMaxSpins);

/// +1 when spin `spin` is up in basis state `index`, -1 otherwise.
inline int spin_sign(std::size_t index, int spin, int n_spins) {
    return ((index >> (n_spins - 1 - spin)) & 1U) ? -1 : 1;
}

inline std::size_t spin_mask(int spin, int n_spins) {
    return std::size_t{1} << (n_spins - 1 - spin);
}

enum class CollapseKind { raising, lowering, dephasing };

/// Single-spin Lindblad operator already scaled by its amplitude.
/// raising = |1><0|, lowering = |0><1|, dephasing = sigma_z.
struct CollapseOperator {
    int spin = 0;
    CollapseKind kind = CollapseKind::lowering;
    double amplitude = 0.0;
};

/// Relaxation operators of independently relaxing spins; zero-rate channels omitted.
std::vector<CollapseOperator> collapse_operators(const SpinSystem& system);

} // namespace qrc
