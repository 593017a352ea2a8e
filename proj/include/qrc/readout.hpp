#pragma once

// Feature extraction from reservoir states. Feature vectors always carry the
// bias component 1 at index 0.

#include "qrc/density_matrix.hpp"
#include "qrc/lindblad.hpp"
#include "qrc/spin_system.hpp"
#include "qrc/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qrc {

/// Bias followed by <sum_{m in g} sigma_alpha^m> for every readout group g
/// of the channel and alpha = x, y, z.
RVector pauli_expectations(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel);

/// Bias followed by the 4^N - 1 non-identity Pauli-string expectations,
/// each divided by `scale`. Strings are ordered base-4 with spin 0 most
/// significant and digits I, X, Y, Z.
RVector full_pauli_expectations(const DensityMatrix& rho, double scale = 1.0);

namespace reference {
/// Tr(rho P) with P built densely; used to check the closed-form expectations.
double pauli_string_expectation(const DensityMatrix& rho, const std::vector<int>& digits);
} // namespace reference

struct FidSignal {
    std::vector<Complex> samples;
    double dt = 0.0;
    std::string channel;
};

/// One observable coherence: element (row, col) of the pulsed state whose row
/// has `spin` up and col has it down, otherwise equal. It contributes
/// rho(row, col) exp(-i omega t - decay t) to the FID.
struct Transition {
    int spin = 0;
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double omega = 0.0;   ///< rad/s
    double decay = 0.0;   ///< 1/T2 of the observed spin
};

std::vector<Transition> fid_transitions(const SpinSystem& system, const std::string& channel);

/// R_x(pi/2) on every spin of the channel.
LocalUnitary readout_pulse(const SpinSystem& system, const std::string& channel);

/// S(t_j) = sum_{m in channel} Tr[rho'(t_j) |1><0|_m], t_j = j dt, where rho'
/// is the pre-pulsed state under coherent evolution with T2 decay of the
/// observed spin. |1><0| = (sigma_y + i sigma_x) / 2i.
FidSignal simulate_fid(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                       const LocalUnitary& pre_pulse, std::size_t n_points, double dt);
FidSignal simulate_fid(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                       const CMatrix& pre_pulse, std::size_t n_points, double dt);

namespace reference {
/// Integrates the master equation with H and dephasing-only channels
/// (T_phi = T2, no T1) sample by sample and traces against |1><0|.
FidSignal simulate_fid_brute_force(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                                   const CMatrix& pre_pulse, std::size_t n_points, double dt,
                                   const StepControl& ctl = {});
} // namespace reference

struct Spectrum {
    std::vector<double> freq_hz;     ///< ascending, spanning [-1/(2dt), 1/(2dt))
    std::vector<Complex> values;
    double spacing_hz = 0.0;         ///< 1/(n dt)
};

/// X(f) = dt sum_j S(t_j) exp(+2 pi i f t_j): peaks sit at +Omega/2pi.
Spectrum fid_to_spectrum(const FidSignal& fid);

namespace reference {
/// O(n^2) direct evaluation of the same transform.
Spectrum dft_spectrum(const FidSignal& fid);
} // namespace reference

struct FrequencyRegion {
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

/// Sorted union of the given intervals.
std::vector<FrequencyRegion> merge_regions(std::vector<FrequencyRegion> regions);

/// +-half_width windows around every distinct transition frequency of the
/// channel, merged where they overlap.
std::vector<FrequencyRegion> default_regions(const SpinSystem& system, const std::string& channel,
                                             double half_width_hz = 25.0);

/// Bin indices inside the (merged) regions, ascending.
std::vector<std::size_t> region_bins(const Spectrum& spectrum, const std::vector<FrequencyRegion>& regions);

/// Bias, then Re and Im of every in-region bin in ascending frequency.
RVector extract_features(const Spectrum& spectrum, const std::vector<FrequencyRegion>& regions);

/// Zero-mean Gaussian noise of standard deviation sigma on every non-bias component.
RVector add_measurement_noise(const RVector& features, double sigma, std::uint64_t seed);
void add_measurement_noise_inplace(RVector& features, double sigma, std::mt19937_64& rng);

struct FidSettings {
    std::size_t n_points = 8192;
    double dt = 3e-4;
    double half_width_hz = 25.0;
};

/// Time-multiplexed readout with the FID -> spectrum -> region pipeline
/// collapsed into one precomputed linear map from observable coherences to
/// in-region spectral bins. Matches fid_to_spectrum + extract_features.
class SpectralReadout {
public:
    SpectralReadout(const SpinSystem& system, const std::string& channel, const FidSettings& settings);
    SpectralReadout(const SpinSystem& system, const std::string& channel, const FidSettings& settings,
                    std::vector<FrequencyRegion> regions);

    std::size_t feature_count() const { return 1 + 2 * bins_.size(); }
    const std::vector<FrequencyRegion>& regions() const { return regions_; }
    const std::vector<std::size_t>& bins() const { return bins_; }

    RVector operator()(const DensityMatrix& rho) const;

private:
    void build(const SpinSystem& system);

    FidSettings settings_;
    std::string channel_;
    LocalUnitary pulse_;
    std::vector<Transition> transitions_;
    std::vector<FrequencyRegion> regions_;
    std::vector<std::size_t> bins_;
    CMatrix kernel_;   ///< bins x transitions
};

void write_fid_csv(const std::string& path, const FidSignal& fid);
void write_spectrum_csv(const std::string& path, const Spectrum& spectrum);

} // namespace qrc
