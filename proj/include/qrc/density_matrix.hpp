#pragma once

#include "qrc/spin_system.hpp"
#include "qrc/types.hpp"

#include <random>

namespace qrc {

/// 2^N x 2^N Hermitian, unit-trace reservoir state.
class DensityMatrix {
public:
    DensityMatrix() = default;
    /// Takes ownership of `m`; throws DimensionError unless m is square with a
    /// power-of-two dimension.
    explicit DensityMatrix(CMatrix m);

    static DensityMatrix maximally_mixed(int n_spins);

    int n_spins() const { return n_spins_; }
    Eigen::Index dim() const { return rho_.rows(); }

    const CMatrix& matrix() const { return rho_; }
    CMatrix& matrix() { return rho_; }
    Complex operator()(Eigen::Index r, Eigen::Index c) const { return rho_(r, c); }

    Complex trace() const { return rho_.trace(); }
    double purity() const;
    /// max |rho - rho^dagger| element.
    double hermiticity_error() const;
    /// Smallest eigenvalue of the Hermitian part.
    double min_eigenvalue() const;

    /// rho <- (rho + rho^dagger)/2, then rho <- rho / Tr(rho).
    void rehermitize_and_normalize();

    /// Checks Hermiticity and trace to 1e-10; `check_positivity` adds the
    /// -1e-8 eigenvalue bound. Throws InvariantError.
    void validate(bool check_positivity = false) const;

private:
    CMatrix rho_;
    int n_spins_ = 0;
};

/// (1/2)||a - b||_1
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// Random state of rank `rank` (0 means full rank) drawn from the induced
/// Hilbert-Schmidt measure.
DensityMatrix random_density_matrix(int n_spins, std::mt19937_64& rng, int rank = 0);

/// Product of single-spin equilibrium states (1/2) diag(1 + p_i, 1 - p_i).
DensityMatrix thermal_state(const SpinSystem& system);

} // namespace qrc
