// Dense reference constructions used to verify the structured engine.

#include "qrc/lindblad.hpp"

#include <cmath>

namespace qrc {

namespace {

CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
    return out;
}

Eigen::Matrix2cd pauli_z() {
    Eigen::Matrix2cd m;
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}

constexpr int kOracleMaxSpins = 4;

} // namespace

namespace reference {

CMatrix embed_single_spin(const Eigen::Matrix2cd& op, int spin, int n_spins) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (int i = 0; i < n_spins; ++i)
        out = kron(out, i == spin ? CMatrix(op) : CMatrix(CMatrix::Identity(2, 2)));
    return out;
}

CMatrix dense_hamiltonian(const SpinSystem& system) {
    const int n = system.n_spins;
    const auto d = static_cast<Eigen::Index>(system.dim());
    CMatrix h = CMatrix::Zero(d, d);
    std::vector<CMatrix> z;
    for (int i = 0; i < n; ++i)
        z.push_back(embed_single_spin(pauli_z(), i, n));
    for (int i = 0; i < n; ++i) {
        h += M_PI * system.frequencies_hz[i] * z[i];
        for (int j = i + 1; j < n; ++j)
            h += 0.5 * M_PI * system.couplings_hz(i, j) * (z[i] * z[j]);
    }
    return h;
}

std::vector<CMatrix> dense_collapse_operators(const SpinSystem& system) {
    Eigen::Matrix2cd raise = Eigen::Matrix2cd::Zero();
    raise(1, 0) = 1.0;
    Eigen::Matrix2cd lower = Eigen::Matrix2cd::Zero();
    lower(0, 1) = 1.0;
    std::vector<CMatrix> out;
    for (const auto& op : collapse_operators(system)) {
        const Eigen::Matrix2cd& base =
            op.kind == CollapseKind::raising ? raise : (op.kind == CollapseKind::lowering ? lower : pauli_z());
        out.push_back(op.amplitude * embed_single_spin(base, op.spin, system.n_spins));
    }
    return out;
}

CMatrix lindblad_rhs_dense(const CMatrix& rho, const SpinSystem& system) {
    if (rho.rows() != static_cast<Eigen::Index>(system.dim()))
        throw DimensionError("lindblad_rhs_dense: dimension mismatch");
    const Complex i(0.0, 1.0);
    const CMatrix h = dense_hamiltonian(system);
    CMatrix out = -i * (h * rho - rho * h);
    for (const auto& l : dense_collapse_operators(system)) {
        const CMatrix ldl = l.adjoint() * l;
        out += l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl);
    }
    return out;
}

} // namespace reference

CMatrix liouvillian_matrix(const SpinSystem& system) {
    if (system.n_spins > kOracleMaxSpins)
        throw DimensionError("Liouvillian oracle supports at most " + std::to_string(kOracleMaxSpins) + " spins");
    const auto d = static_cast<Eigen::Index>(system.dim());
    const CMatrix id = CMatrix::Identity(d, d);
    const Complex i(0.0, 1.0);
    const CMatrix h = reference::dense_hamiltonian(system);
    CMatrix liou = -i * (kron(id, h) - kron(h.transpose(), id));
    for (const auto& l : reference::dense_collapse_operators(system)) {
        const CMatrix ldl = l.adjoint() * l;
        liou += kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id);
    }
    return liou;
}

CMatrix expm_taylor(const CMatrix& a, int order) {
    if (a.rows() != a.cols())
        throw DimensionError("expm_taylor: matrix must be square");
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5)
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const CMatrix b = a / std::ldexp(1.0, squarings);
    const CMatrix id = CMatrix::Identity(a.rows(), a.cols());
    CMatrix result = id;
    for (int k = order; k >= 1; --k)
        result = id + (b * result) / static_cast<double>(k);
    for (int s = 0; s < squarings; ++s)
        result = (result * result).eval();
    return result;
}

CMatrix liouvillian_exponential_oracle(const SpinSystem& system, double duration) {
    const CMatrix liou = liouvillian_matrix(system);
    if (duration == 0.0)
        return CMatrix::Identity(liou.rows(), liou.cols());
    return expm_taylor(duration * liou);
}

CMatrix apply_superoperator(const CMatrix& superop, const CMatrix& rho) {
    const Eigen::Index d = rho.rows();
    if (superop.rows() != d * d)
        throw DimensionError("apply_superoperator: dimension mismatch");
    const CVector v = Eigen::Map<const CVector>(rho.data(), d * d);
    const CVector w = superop * v;
    return Eigen::Map<const CMatrix>(w.data(), d, d);
}

} // namespace qrc
