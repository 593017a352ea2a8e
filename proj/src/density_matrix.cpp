#include "qrc/density_matrix.hpp"

#include <Eigen/Eigenvalues>

#include <bit>
#include <cmath>

namespace qrc {

DensityMatrix::DensityMatrix(CMatrix m) : rho_(std::move(m)) {
    const auto d = static_cast<std::size_t>(rho_.rows());
    if (rho_.rows() != rho_.cols() || d == 0 || !std::has_single_bit(d))
        throw DimensionError("density matrix must be square with a power-of-two dimension");
    n_spins_ = std::countr_zero(d);
}

DensityMatrix DensityMatrix::maximally_mixed(int n_spins) {
    const auto d = Eigen::Index{1} << n_spins;
    return DensityMatrix(CMatrix::Identity(d, d) / static_cast<double>(d));
}

double DensityMatrix::purity() const { return (rho_ * rho_).trace().real(); }

double DensityMatrix::hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
    const CMatrix h = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void DensityMatrix::rehermitize_and_normalize() {
    rho_ = 0.5 * (rho_ + rho_.adjoint()).eval();
    const double tr = rho_.trace().real();
    if (!(std::abs(tr) > 0.0) || !std::isfinite(tr))
        throw NumericalError("cannot normalize a density matrix with trace " + std::to_string(tr));
    rho_ /= tr;
}

void DensityMatrix::validate(bool check_positivity) const {
    if (!rho_.allFinite())
        throw InvariantError("density matrix has non-finite entries");
    const double herm = hermiticity_error();
    if (herm > 1e-10)
        throw InvariantError("density matrix is not Hermitian (max deviation " + std::to_string(herm) + ")");
    const Complex tr = trace();
    if (std::abs(tr - 1.0) > 1e-10)
        throw InvariantError("density matrix trace deviates from 1 by " + std::to_string(std::abs(tr - 1.0)));
    if (check_positivity) {
        const double lo = min_eigenvalue();
        if (lo < -1e-8)
            throw InvariantError("density matrix has eigenvalue " + std::to_string(lo));
    }
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
    if (a.dim() != b.dim())
        throw DimensionError("trace_distance: dimension mismatch");
    CMatrix diff = a.matrix() - b.matrix();
    diff = 0.5 * (diff + diff.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(diff, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

DensityMatrix random_density_matrix(int n_spins, std::mt19937_64& rng, int rank) {
    const auto d = Eigen::Index{1} << n_spins;
    const Eigen::Index k = rank <= 0 ? d : rank;
    std::normal_distribution<double> g(0.0, 1.0);
    CMatrix ginibre(d, k);
    for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index r = 0; r < d; ++r) {
            const double re = g(rng);
            const double im = g(rng);
            ginibre(r, c) = Complex(re, im);
        }
    CMatrix rho = ginibre * ginibre.adjoint();
    rho /= rho.trace().real();
    DensityMatrix out(std::move(rho));
    out.rehermitize_and_normalize();
    return out;
}

DensityMatrix thermal_state(const SpinSystem& system) {
    const std::size_t d = system.dim();
    CMatrix rho = CMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t b = 0; b < d; ++b) {
        double w = 1.0;
        for (int i = 0; i < system.n_spins; ++i)
            w *= 0.5 * (1.0 + spin_sign(b, i, system.n_spins) * system.polarizations[i]);
        rho(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) = w;
    }
    return DensityMatrix(std::move(rho));
}

} // namespace qrc
