#include "qrc/esn.hpp"

#include <Eigen/Eigenvalues>
#include <arpack/arpack.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace qrc {

void EsnParams::validate() const {
    if (nodes < 1)
        throw ConfigError("ESN: node count must be positive");
    if (!(connectivity > 0.0 && connectivity <= 1.0))
        throw ConfigError("ESN: connectivity must lie in (0, 1]");
    if (!(spectral_radius > 0.0))
        throw ConfigError("ESN: spectral radius must be positive");
    if (input_dim < 1)
        throw ConfigError("ESN: input dimension must be positive");
}

namespace {

constexpr int kDenseEigenLimit = 1500;

double radius_dense(const SparseMatrix& w) {
    const RMatrix d = RMatrix(w);
    Eigen::EigenSolver<RMatrix> es(d, false);
    if (es.info() != Eigen::Success)
        throw NumericalError("ESN: dense eigenvalue solve failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double radius_arnoldi(const SparseMatrix& w) {
    const auto n = static_cast<a_int>(w.rows());
    const a_int nev = std::min<a_int>(6, n - 2);
    const a_int ncv = std::min<a_int>(std::max<a_int>(2 * nev + 1, 40), n);
    const double tol = 1e-12;
    std::vector<double> resid(n, 1.0), v(static_cast<std::size_t>(n * ncv)), workd(3 * static_cast<std::size_t>(n));
    const a_int lworkl = 3 * ncv * ncv + 6 * ncv;
    std::vector<double> workl(static_cast<std::size_t>(lworkl));
    a_int iparam[11] = {1, 0, 5000, 1, 0, 0, 1, 0, 0, 0, 0};
    a_int ipntr[14] = {};
    a_int ido = 0, info = 1;   // info = 1: use the supplied starting vector
    for (;;) {
        arpack::naupd(ido, arpack::bmat::identity, n, arpack::which::largest_magnitude, nev, tol, resid.data(), ncv,
                      v.data(), n, iparam, ipntr, workd.data(), workl.data(), lworkl, info);
        if (ido != 1 && ido != -1)
            break;
        Eigen::Map<const RVector> x(workd.data() + ipntr[0] - 1, n);
        Eigen::Map<RVector> y(workd.data() + ipntr[1] - 1, n);
        y = w * x;
    }
    if (info < 0)
        throw NumericalError("ESN: Arnoldi iteration failed (info " + std::to_string(info) + ")");
    std::vector<a_int> select(static_cast<std::size_t>(ncv));
    std::vector<double> dr(nev + 1), di(nev + 1), z(static_cast<std::size_t>(n * (nev + 1))),
        workev(3 * static_cast<std::size_t>(ncv));
    a_int einfo = 0;
    arpack::neupd(0, arpack::howmny::ritz_vectors, select.data(), dr.data(), di.data(), z.data(), n, 0.0, 0.0,
                  workev.data(), arpack::bmat::identity, n, arpack::which::largest_magnitude, nev, tol, resid.data(),
                  ncv, v.data(), n, iparam, ipntr, workd.data(), workl.data(), lworkl, einfo);
    if (einfo != 0)
        throw NumericalError("ESN: Arnoldi eigenvalue extraction failed (info " + std::to_string(einfo) + ")");
    double r = 0.0;
    for (a_int i = 0; i < iparam[4]; ++i)
        r = std::max(r, std::hypot(dr[i], di[i]));
    return r;
}

} // namespace

double spectral_radius(const SparseMatrix& w, EigenMethod method) {
    if (w.rows() != w.cols())
        throw DimensionError("spectral_radius: matrix must be square");
    if (w.nonZeros() == 0)
        return 0.0;
    if (method == EigenMethod::automatic)
        method = (w.rows() <= kDenseEigenLimit) ? EigenMethod::dense : EigenMethod::arnoldi;
    if (method == EigenMethod::arnoldi && w.rows() < 8)
        method = EigenMethod::dense;
    return method == EigenMethod::dense ? radius_dense(w) : radius_arnoldi(w);
}

EsnMatrices esn_init(const EsnParams& p) {
    p.validate();
    std::mt19937_64 rng(p.seed);
    const auto m = static_cast<std::uint64_t>(p.nodes);
    EsnMatrices out;
    out.w_in.resize(p.nodes, 1 + p.input_dim);
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index r = 0; r < out.w_in.rows(); ++r)
        for (Eigen::Index c = 0; c < out.w_in.cols(); ++c)
            out.w_in(r, c) = coin(rng) ? 1.0 : -1.0;

    const std::uint64_t total = m * m;
    const auto support = static_cast<std::uint64_t>(std::ceil(p.connectivity * static_cast<double>(total) - 1e-9));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        // Floyd's algorithm: `support` distinct flat positions
        std::unordered_set<std::uint64_t> chosen;
        chosen.reserve(static_cast<std::size_t>(support) * 2);
        std::vector<std::uint64_t> order;
        order.reserve(static_cast<std::size_t>(support));
        for (std::uint64_t j = total - support; j < total; ++j) {
            const std::uint64_t t = std::uniform_int_distribution<std::uint64_t>(0, j)(rng);
            const std::uint64_t pick = chosen.insert(t).second ? t : j;
            if (pick == j)
                chosen.insert(j);
            order.push_back(pick);
        }
        std::sort(order.begin(), order.end());
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(order.size());
        for (auto pos : order)
            trips.emplace_back(static_cast<int>(pos / m), static_cast<int>(pos % m), normal(rng));
        SparseMatrix w(p.nodes, p.nodes);
        w.setFromTriplets(trips.begin(), trips.end());
        const double r0 = spectral_radius(w);
        if (r0 > 0.0) {
            out.w = w * (p.spectral_radius / r0);
            return out;
        }
    }
    throw NumericalError("ESN: recurrent matrix kept a zero spectral radius");
}

RVector esn_final_state(const RMatrix& inputs, const EsnMatrices& m, const RVector& initial) {
    const Eigen::Index n = m.w.rows();
    if (inputs.cols() + 1 != m.w_in.cols())
        throw DimensionError("esn_run: input width does not match W_in");
    RVector x = initial.size() ? initial : RVector::Zero(n);
    if (x.size() != n)
        throw DimensionError("esn_run: initial state has the wrong size");
    RVector u(1 + inputs.cols());
    u[0] = 1.0;
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        u.tail(inputs.cols()) = inputs.row(k).transpose();
        x = (m.w_in * u + m.w * x).array().tanh().matrix();
    }
    return x;
}

RMatrix esn_run(const RMatrix& inputs, const EsnMatrices& m, int washout, const RVector& initial) {
    const Eigen::Index n = m.w.rows();
    if (inputs.cols() + 1 != m.w_in.cols())
        throw DimensionError("esn_run: input width does not match W_in");
    if (washout < 0 || washout > inputs.rows())
        throw InvariantError("esn_run: washout outside the input length");
    RVector x = initial.size() ? initial : RVector::Zero(n);
    if (x.size() != n)
        throw DimensionError("esn_run: initial state has the wrong size");
    RMatrix out(inputs.rows() - washout, 1 + n);
    RVector u(1 + inputs.cols());
    u[0] = 1.0;
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        u.tail(inputs.cols()) = inputs.row(k).transpose();
        x = (m.w_in * u + m.w * x).array().tanh().matrix();
        if (k >= washout) {
            out(k - washout, 0) = 1.0;
            out.row(k - washout).tail(n) = x.transpose();
        }
    }
    return out;
}

} // namespace qrc
