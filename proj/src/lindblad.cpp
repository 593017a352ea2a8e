#include "qrc/lindblad.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numeric>

namespace qrc {

LindbladModel::LindbladModel(const SpinSystem& system, int max_spins)
    : n_spins_(system.n_spins), dim_(system.dim()) {
    system.validate();
    energies_ = build_hamiltonian(system, max_spins).energies;
    lowering_.assign(n_spins_, 0.0);
    raising_.assign(n_spins_, 0.0);
    std::vector<double> dephasing(n_spins_, 0.0);
    for (const auto& op : collapse_operators(system)) {
        const double rate = op.amplitude * op.amplitude;
        switch (op.kind) {
        case CollapseKind::lowering:
            lowering_[op.spin] = rate;
            break;
        case CollapseKind::raising:
            raising_[op.spin] = rate;
            break;
        case CollapseKind::dephasing:
            // g^2 (sigma_z rho sigma_z - rho) damps flipped elements at 2 g^2.
            dephasing[op.spin] = 2.0 * rate;
            break;
        }
    }

    std::vector<double> anticomm(dim_, 0.0);
    for (std::size_t m = 0; m < dim_; ++m)
        for (int i = 0; i < n_spins_; ++i)
            anticomm[m] += (m & spin_mask(i, n_spins_)) ? lowering_[i] : raising_[i];
    std::vector<double> flip_rate(dim_, 0.0);
    for (std::size_t x = 0; x < dim_; ++x)
        for (int i = 0; i < n_spins_; ++i)
            if (x & spin_mask(i, n_spins_))
                flip_rate[x] += dephasing[i];

    const auto d = static_cast<Eigen::Index>(dim_);
    diag_.resize(d, d);
    double max_abs = 0.0;
    for (Eigen::Index n = 0; n < d; ++n)
        for (Eigen::Index m = 0; m < d; ++m) {
            const Complex v(-0.5 * (anticomm[m] + anticomm[n]) - flip_rate[m ^ n], -(energies_[m] - energies_[n]));
            diag_(m, n) = v;
            max_abs = std::max(max_abs, std::abs(v));
        }
    double jump_total = 0.0;
    for (int i = 0; i < n_spins_; ++i) {
        jump_total += lowering_[i] + raising_[i];
        has_jumps_ = has_jumps_ || lowering_[i] > 0.0 || raising_[i] > 0.0;
    }
    norm_bound_ = max_abs + jump_total;
}

void lindblad_rhs(const LindbladModel& model, const CMatrix& rho, CMatrix& out) {
    const auto d = static_cast<Eigen::Index>(model.dim());
    if (rho.rows() != d || rho.cols() != d)
        throw DimensionError("lindblad_rhs: state dimension does not match the model");
    out.resize(d, d);
    const CMatrix& D = model.diagonal_generator();
    const int n = model.n_spins();
    const auto& down = model.lowering_rates();
    const auto& up = model.raising_rates();
    const bool jumps = model.has_jumps();

#pragma omp parallel for schedule(static) if (d >= 64)
    for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) {
            Complex acc = D(r, c) * rho(r, c);
            if (jumps) {
                for (int i = 0; i < n; ++i) {
                    const auto b = static_cast<Eigen::Index>(spin_mask(i, n));
                    const bool rb = r & b;
                    const bool cb = c & b;
                    if (!rb && !cb)
                        acc += down[i] * rho(r | b, c | b);
                    else if (rb && cb)
                        acc += up[i] * rho(r & ~b, c & ~b);
                }
            }
            out(r, c) = acc;
        }
    }
}

CMatrix lindblad_rhs(const DensityMatrix& rho, const SpinSystem& system) {
    if (rho.n_spins() != system.n_spins)
        throw DimensionError("lindblad_rhs: state has " + std::to_string(rho.n_spins()) + " spins, system has " +
                             std::to_string(system.n_spins));
    LindbladModel model(system);
    CMatrix out;
    lindblad_rhs(model, rho.matrix(), out);
    return out;
}

std::size_t StepControl::steps_for(double duration, double generator_norm) const {
    if (duration <= 0.0)
        return 0;
    double h = step;
    if (h <= 0.0) {
        h = std::min(duration / 100.0, max_step);
        if (generator_norm > 0.0)
            h = std::min(h, std::pow(120.0 * step_tolerance, 0.2) / generator_norm);
    }
    if (!(h > 0.0))
        throw NumericalError("RK4 step must be positive");
    const double ratio = duration / h;
    auto steps = static_cast<std::size_t>(std::ceil(ratio - 1e-9 * ratio));
    steps = std::max<std::size_t>(steps, 1);
    if (steps > max_steps)
        throw NumericalError("evolve needs " + std::to_string(steps) + " RK4 steps, above the limit of " +
                             std::to_string(max_steps));
    return steps;
}

DensityMatrix evolve(const DensityMatrix& rho, const LindbladModel& model, double duration, const StepControl& ctl,
                     EvolveReport* report) {
    if (duration < 0.0)
        throw NumericalError("evolve: negative duration");
    if (static_cast<std::size_t>(rho.dim()) != model.dim())
        throw DimensionError("evolve: state dimension does not match the model");
    if (duration == 0.0) {
        if (report)
            *report = EvolveReport{};
        return rho;
    }
    const std::size_t steps = ctl.steps_for(duration, model.generator_norm_bound());
    const double h = duration / static_cast<double>(steps);

    CMatrix y = rho.matrix();
    CMatrix k1, k2, k3, k4, tmp;
    for (std::size_t s = 0; s < steps; ++s) {
        lindblad_rhs(model, y, k1);
        tmp = y + (0.5 * h) * k1;
        lindblad_rhs(model, tmp, k2);
        tmp = y + (0.5 * h) * k2;
        lindblad_rhs(model, tmp, k3);
        tmp = y + h * k3;
        lindblad_rhs(model, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!y.allFinite())
        throw NumericalError("evolve: non-finite state (step " + std::to_string(h) + " s too large?)");
    if (report) {
        report->steps = steps;
        report->step = h;
        report->trace_drift = std::abs(y.trace() - 1.0);
    }
    DensityMatrix out(std::move(y));
    out.rehermitize_and_normalize();
    return out;
}

DensityMatrix evolve(const DensityMatrix& rho, const SpinSystem& system, double duration, const StepControl& ctl,
                     EvolveReport* report) {
    LindbladModel model(system);
    return evolve(rho, model, duration, ctl, report);
}

DensityMatrix apply_unitary(const DensityMatrix& rho, const CMatrix& unitary, bool validate) {
    if (unitary.rows() != rho.dim() || unitary.cols() != rho.dim())
        throw DimensionError("apply_unitary: operator dimension does not match the state");
    if (validate) {
        const double err =
            (unitary.adjoint() * unitary - CMatrix::Identity(rho.dim(), rho.dim())).cwiseAbs().maxCoeff();
        if (err > 1e-10)
            throw InvariantError("apply_unitary: operator is not unitary (deviation " + std::to_string(err) + ")");
    }
    return DensityMatrix(unitary * rho.matrix() * unitary.adjoint());
}

Eigen::Matrix2cd rotation_gate(double theta, double tilt) {
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    const double nx = std::cos(tilt);
    const double nz = std::sin(tilt);
    const Complex i(0.0, 1.0);
    Eigen::Matrix2cd g;
    g(0, 0) = c - i * s * nz;
    g(0, 1) = -i * s * nx;
    g(1, 0) = -i * s * nx;
    g(1, 1) = c + i * s * nz;
    return g;
}

LocalUnitary::LocalUnitary(int n_spins)
    : n_spins_(n_spins), gates_(n_spins, Gate::Identity()), active_(n_spins, false) {}

void LocalUnitary::set(int spin, const Gate& gate) {
    gates_.at(spin) = gate;
    active_.at(spin) = !gate.isIdentity(0.0);
}

void LocalUnitary::compose(int spin, const Gate& gate) { set(spin, Gate(gate * gates_.at(spin))); }

CMatrix LocalUnitary::to_dense() const {
    CMatrix u = CMatrix::Identity(1, 1);
    for (int i = 0; i < n_spins_; ++i) {
        const Gate& g = gates_[i];
        CMatrix next(u.rows() * 2, u.cols() * 2);
        for (Eigen::Index r = 0; r < u.rows(); ++r)
            for (Eigen::Index c = 0; c < u.cols(); ++c)
                next.block<2, 2>(2 * r, 2 * c) = u(r, c) * g;
        u = std::move(next);
    }
    return u;
}

void LocalUnitary::apply(CMatrix& rho) const {
    const Eigen::Index d = rho.rows();
    for (int i = 0; i < n_spins_; ++i) {
        if (!active_[i])
            continue;
        const Gate& g = gates_[i];
        const auto b = static_cast<Eigen::Index>(spin_mask(i, n_spins_));
        const Complex g00 = g(0, 0), g01 = g(0, 1), g10 = g(1, 0), g11 = g(1, 1);
#pragma omp parallel for schedule(static) if (d >= 128)
        for (Eigen::Index c = 0; c < d; ++c) {
            for (Eigen::Index r0 = 0; r0 < d; ++r0) {
                if (r0 & b)
                    continue;
                const Eigen::Index r1 = r0 | b;
                const Complex a0 = rho(r0, c);
                const Complex a1 = rho(r1, c);
                rho(r0, c) = g00 * a0 + g01 * a1;
                rho(r1, c) = g10 * a0 + g11 * a1;
            }
        }
        const Complex h00 = std::conj(g00), h01 = std::conj(g01), h10 = std::conj(g10), h11 = std::conj(g11);
#pragma omp parallel for schedule(static) if (d >= 128)
        for (Eigen::Index c0 = 0; c0 < d; ++c0) {
            if (c0 & b)
                continue;
            const Eigen::Index c1 = c0 | b;
            for (Eigen::Index r = 0; r < d; ++r) {
                const Complex a0 = rho(r, c0);
                const Complex a1 = rho(r, c1);
                rho(r, c0) = a0 * h00 + a1 * h01;
                rho(r, c1) = a0 * h10 + a1 * h11;
            }
        }
    }
}

DensityMatrix LocalUnitary::apply(const DensityMatrix& rho) const {
    if (rho.n_spins() != n_spins_)
        throw DimensionError("LocalUnitary::apply: spin count mismatch");
    CMatrix m = rho.matrix();
    apply(m);
    return DensityMatrix(std::move(m));
}

Propagator::Propagator(const LindbladModel& model, double duration) : duration_(duration), dim_(model.dim()) {
    if (duration < 0.0)
        throw NumericalError("Propagator: negative duration");
    const int n = model.n_spins();
    const std::size_t d = model.dim();
    const std::size_t all = d - 1;
    const CMatrix& D = model.diagonal_generator();
    const auto& down = model.lowering_rates();
    const auto& up = model.raising_rates();
    std::vector<Eigen::Index> local(d, -1);

    for (std::size_t x = 0; x < d; ++x) {
        const std::size_t free = all & ~x;
        // Every submask of x fixes the bits of m that differ between row and column.
        for (std::size_t anchor = x;; anchor = (anchor - 1) & x) {
            Block blk;
            for (std::size_t f = 0;; f = (f - free) & free) {
                const std::size_t m = anchor | f;
                local[m] = static_cast<Eigen::Index>(blk.rows.size());
                blk.rows.push_back(static_cast<Eigen::Index>(m));
                blk.cols.push_back(static_cast<Eigen::Index>(m ^ x));
                if (f == free)
                    break;
            }
            const auto s = static_cast<Eigen::Index>(blk.rows.size());
            CMatrix gen = CMatrix::Zero(s, s);
            for (Eigen::Index j = 0; j < s; ++j) {
                const auto m = static_cast<std::size_t>(blk.rows[j]);
                gen(j, j) = D(blk.rows[j], blk.cols[j]);
                for (int i = 0; i < n; ++i) {
                    const std::size_t b = spin_mask(i, n);
                    if (!(free & b))
                        continue;
                    if (m & b) {
                        if (up[i] > 0.0)
                            gen(j, local[m & ~b]) += up[i];
                    } else if (down[i] > 0.0) {
                        gen(j, local[m | b]) += down[i];
                    }
                }
            }
            blk.map = (gen * duration).exp();
            blocks_.push_back(std::move(blk));
            if (anchor == 0)
                break;
        }
    }
}

void Propagator::apply(CMatrix& rho) const {
    if (static_cast<std::size_t>(rho.rows()) != dim_ || rho.rows() != rho.cols())
        throw DimensionError("Propagator::apply: state dimension mismatch");
    CMatrix out(rho.rows(), rho.cols());
    const auto nb = static_cast<std::ptrdiff_t>(blocks_.size());
#pragma omp parallel for schedule(dynamic, 16) if (dim_ >= 64)
    for (std::ptrdiff_t k = 0; k < nb; ++k) {
        const Block& blk = blocks_[k];
        const auto s = static_cast<Eigen::Index>(blk.rows.size());
        if (s == 1) {
            out(blk.rows[0], blk.cols[0]) = blk.map(0, 0) * rho(blk.rows[0], blk.cols[0]);
            continue;
        }
        CVector v(s);
        for (Eigen::Index j = 0; j < s; ++j)
            v(j) = rho(blk.rows[j], blk.cols[j]);
        const CVector w = blk.map * v;
        for (Eigen::Index j = 0; j < s; ++j)
            out(blk.rows[j], blk.cols[j]) = w(j);
    }
    rho = std::move(out);
}

DensityMatrix Propagator::apply(const DensityMatrix& rho) const {
    CMatrix m = rho.matrix();
    apply(m);
    DensityMatrix out(std::move(m));
    out.rehermitize_and_normalize();
    return out;
}

} // namespace qrc
