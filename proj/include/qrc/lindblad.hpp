#pragma once

// Lindblad master equation for independently relaxing spins with an Ising
// Hamiltonian. Since H is diagonal and every collapse operator acts on one
// spin, the generator splits into an elementwise part
//   D_mn = -i(E_m - E_n) - (a_m + a_n)/2 - gamma_phi(m xor n)
// plus single-spin jump terms L rho L^dagger that move weight between
// elements which differ in one spin that is equal on both sides.

#include "qrc/density_matrix.hpp"
#include "qrc/spin_system.hpp"
#include "qrc/types.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace qrc {

/// Precomputed generator data for one SpinSystem. Immutable once built.
class LindbladModel {
public:
    explicit LindbladModel(const SpinSystem& system, int max_spins = kDefaultMaxSpins);

    int n_spins() const { return n_spins_; }
    std::size_t dim() const { return dim_; }
    const std::vector<double>& energies() const { return energies_; }
    /// Elementwise generator D (dim x dim).
    const CMatrix& diagonal_generator() const { return diag_; }
    /// Rate of |0><1| (lowering) and |1><0| (raising) jumps per spin.
    const std::vector<double>& lowering_rates() const { return lowering_; }
    const std::vector<double>& raising_rates() const { return raising_; }
    bool has_jumps() const { return has_jumps_; }
    /// Upper bound on |D_mn| plus jump rates; sets the RK4 step scale.
    double generator_norm_bound() const { return norm_bound_; }

private:
    int n_spins_;
    std::size_t dim_;
    std::vector<double> energies_;
    std::vector<double> lowering_;
    std::vector<double> raising_;
    CMatrix diag_;
    bool has_jumps_ = false;
    double norm_bound_ = 0.0;
};

/// d rho/dt = -i[H, rho] + sum_a (L_a rho L_a^dagger - {L_a^dagger L_a, rho}/2).
/// OpenMP-parallel over rows. `out` is resized as needed.
void lindblad_rhs(const LindbladModel& model, const CMatrix& rho, CMatrix& out);

/// Convenience overload that checks dimensions against the system.
CMatrix lindblad_rhs(const DensityMatrix& rho, const SpinSystem& system);

namespace reference {
/// `op` acting on `spin`, identity elsewhere (Kronecker construction).
CMatrix embed_single_spin(const Eigen::Matrix2cd& op, int spin, int n_spins);
/// Ising Hamiltonian summed from Kronecker products of Pauli matrices.
CMatrix dense_hamiltonian(const SpinSystem& system);
/// Collapse operators as explicit matrices, amplitudes included.
std::vector<CMatrix> dense_collapse_operators(const SpinSystem& system);
/// Serial reference: dense H and explicit collapse-operator products.
CMatrix lindblad_rhs_dense(const CMatrix& rho, const SpinSystem& system);
} // namespace reference

/// Fixed-step RK4 control. With `step` = 0 the step is chosen as
/// min(duration/100, max_step, (120 tol)^(1/5) / ||generator||).
struct StepControl {
    double step = 0.0;
    double max_step = 2e-5;
    double step_tolerance = 1e-14;
    std::size_t max_steps = 500'000'000;

    /// Number of equal RK4 steps used to cover `duration`.
    std::size_t steps_for(double duration, double generator_norm) const;
};

struct EvolveReport {
    std::size_t steps = 0;
    double step = 0.0;
    /// |Tr(rho) - 1| before renormalization.
    double trace_drift = 0.0;
};

/// RK4 integration of the master equation over `duration` seconds. The result
/// is re-Hermitized and trace-normalized; duration 0 returns `rho` unchanged.
/// Throws NumericalError on non-finite values or when max_steps is exceeded.
DensityMatrix evolve(const DensityMatrix& rho, const LindbladModel& model, double duration,
                     const StepControl& ctl = {}, EvolveReport* report = nullptr);

DensityMatrix evolve(const DensityMatrix& rho, const SpinSystem& system, double duration,
                     const StepControl& ctl = {}, EvolveReport* report = nullptr);

/// Checked against U^dagger U = I to 1e-10 when `validate` is set.
DensityMatrix apply_unitary(const DensityMatrix& rho, const CMatrix& unitary, bool validate = false);

/// Tensor product of single-spin gates; spins without a gate get identity.
class LocalUnitary {
public:
    using Gate = Eigen::Matrix2cd;

    explicit LocalUnitary(int n_spins);

    int n_spins() const { return n_spins_; }
    void set(int spin, const Gate& gate);
    /// Left-multiplies the gate already on `spin`.
    void compose(int spin, const Gate& gate);
    bool is_identity(int spin) const { return !active_[spin]; }
    const Gate& gate(int spin) const { return gates_[spin]; }

    /// Dense 2^N x 2^N matrix.
    CMatrix to_dense() const;

    /// In-place rho <- U rho U^dagger, one spin at a time.
    void apply(CMatrix& rho) const;
    DensityMatrix apply(const DensityMatrix& rho) const;

private:
    int n_spins_;
    std::vector<Gate> gates_;
    std::vector<bool> active_;
};

/// exp(-i theta (cos(tilt) sigma_x + sin(tilt) sigma_z) / 2). tilt = 0 is R_x.
Eigen::Matrix2cd rotation_gate(double theta, double tilt = 0.0);

/// Exact channel exp(duration * L) assembled from the invariant blocks of the
/// generator: elements (m, m xor x) with fixed bits of m on the positions of x.
/// Each block is exponentiated once; applying costs O(6^N).
class Propagator {
public:
    Propagator(const LindbladModel& model, double duration);

    double duration() const { return duration_; }
    std::size_t block_count() const { return blocks_.size(); }

    void apply(CMatrix& rho) const;
    DensityMatrix apply(const DensityMatrix& rho) const;

private:
    struct Block {
        std::vector<Eigen::Index> rows;
        std::vector<Eigen::Index> cols;
        CMatrix map;
    };
    double duration_;
    std::vector<Block> blocks_;
    std::size_t dim_;
};

// -- verification oracle ------------------------------------------------------

/// Dense Liouvillian acting on column-stacked vec(rho), built from Kronecker
/// products of explicit operators. N <= 4.
CMatrix liouvillian_matrix(const SpinSystem& system);

/// exp(A) by norm-based scaling, a degree-12 Taylor series and repeated squaring.
CMatrix expm_taylor(const CMatrix& a, int order = 12);

/// exp(duration * L) on vec(rho). N <= 4.
CMatrix liouvillian_exponential_oracle(const SpinSystem& system, double duration);

/// Applies a superoperator from the oracle to rho.
CMatrix apply_superoperator(const CMatrix& superop, const CMatrix& rho);

} // namespace qrc
