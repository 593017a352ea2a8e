#include "qrc/learning.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace qrc {

namespace {

Eigen::Index first_free_column(bool has_bias) { return has_bias ? 1 : 0; }

void check_rows(const RMatrix& x, Eigen::Index rows, const char* what) {
    if (x.rows() != rows)
        throw DimensionError(std::string(what) + ": feature and target row counts differ");
}

/// Same minimizer through the L x L kernel system: penalized weights are
/// Xc^T (Xc Xc^T + lambda I)^{-1} yc on centered data, the bias restores the means.
RMatrix ridge_fit_dual(const RMatrix& x, const RMatrix& y, double lambda, bool has_bias) {
    const Eigen::Index c0 = first_free_column(has_bias);
    const Eigen::Index p = x.cols() - c0;
    RMatrix xc = x.rightCols(p);
    RMatrix yc = y;
    RVector mx = RVector::Zero(p), my = RVector::Zero(y.cols());
    if (has_bias) {
        mx = xc.colwise().mean().transpose();
        my = yc.colwise().mean().transpose();
        xc.rowwise() -= mx.transpose();
        yc.rowwise() -= my.transpose();
    }
    RMatrix k = xc * xc.transpose();
    k.diagonal().array() += lambda;
    Eigen::LDLT<RMatrix> ldlt(k);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("ridge_fit: kernel system is singular");
    RMatrix w(x.cols(), y.cols());
    w.bottomRows(p) = xc.transpose() * ldlt.solve(yc);
    if (has_bias)
        w.row(0) = my.transpose() - mx.transpose() * w.bottomRows(p);
    if (!w.allFinite())
        throw NumericalError("ridge_fit: solution is not finite");
    return w;
}

} // namespace

StandardizationStats zscore_fit(const RMatrix& x, bool has_bias) {
    if (x.rows() < 2)
        throw InvariantError("zscore_fit: need at least two rows");
    StandardizationStats s;
    s.has_bias = has_bias;
    s.mean = RVector::Zero(x.cols());
    s.stddev = RVector::Ones(x.cols());
    const auto n = static_cast<double>(x.rows());
    for (Eigen::Index c = first_free_column(has_bias); c < x.cols(); ++c) {
        const double mu = x.col(c).mean();
        const double sd = std::sqrt((x.col(c).array() - mu).square().sum() / n);
        // spreads at rounding level count as constant
        if (sd > 1e-14 * std::max(1.0, std::abs(mu))) {
            s.mean[c] = mu;
            s.stddev[c] = sd;
        } else {
            s.mean[c] = x(0, c);
        }
    }
    return s;
}

RMatrix zscore_apply(const RMatrix& x, const StandardizationStats& stats) {
    if (x.cols() != stats.mean.size())
        throw DimensionError("zscore_apply: column count does not match the fitted statistics");
    RMatrix out = x;
    for (Eigen::Index c = first_free_column(stats.has_bias); c < x.cols(); ++c) {
        const double sd = stats.stddev[c];
        out.col(c) = (x.col(c).array() - stats.mean[c]) / sd;
    }
    return out;
}

RMatrix ridge_fit(const RMatrix& x, const RMatrix& y, double lambda, bool has_bias) {
    check_rows(x, y.rows(), "ridge_fit");
    if (x.rows() < 1)
        throw InvariantError("ridge_fit: need at least one row");
    if (!(lambda >= 0.0))
        throw InvariantError("ridge_fit: lambda must be non-negative");
    if (lambda > 0.0 && x.cols() > x.rows())
        return ridge_fit_dual(x, y, lambda, has_bias);
    RMatrix a = RMatrix::Zero(x.cols(), x.cols());
    a.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    a = a.selfadjointView<Eigen::Lower>();
    for (Eigen::Index c = first_free_column(has_bias); c < x.cols(); ++c)
        a(c, c) += lambda;
    Eigen::LDLT<RMatrix> ldlt(a);
    const double scale = a.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || scale == 0.0 ||
        (lambda == 0.0 && ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-13 * scale))
        throw NumericalError("ridge_fit: normal equations are singular");
    RMatrix w = ldlt.solve(x.transpose() * y);
    if (!w.allFinite())
        throw NumericalError("ridge_fit: solution is not finite");
    return w;
}

RVector ridge_fit(const RMatrix& x, const RVector& y, double lambda, bool has_bias) {
    return ridge_fit(x, RMatrix(y), lambda, has_bias).col(0);
}

double ridge_objective(const RMatrix& x, const RVector& y, const RVector& w, double lambda, bool has_bias) {
    const double fit = (y - x * w).squaredNorm();
    const Eigen::Index c0 = first_free_column(has_bias);
    return fit + lambda * w.tail(w.size() - c0).squaredNorm();
}

std::vector<double> default_lambda_grid() {
    std::vector<double> g;
    for (int e = -8; e <= 4; ++e)
        g.push_back(std::pow(10.0, e));
    return g;
}

std::vector<std::vector<Eigen::Index>> fold_rows(Eigen::Index rows, int folds, FoldMode mode, std::uint64_t seed) {
    if (folds < 2)
        throw InvariantError("cross validation needs at least two folds");
    if (rows < folds)
        throw InvariantError("cross validation: " + std::to_string(rows) + " rows cannot fill " +
                             std::to_string(folds) + " folds");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (mode == FoldMode::shuffled) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(folds));
    const Eigen::Index base = rows / folds, extra = rows % folds;
    Eigen::Index pos = 0;
    for (int f = 0; f < folds; ++f) {
        const Eigen::Index len = base + (f < extra ? 1 : 0);
        out[f].assign(order.begin() + pos, order.begin() + pos + len);
        std::sort(out[f].begin(), out[f].end());
        pos += len;
    }
    return out;
}

CrossValidation cross_validate(const RMatrix& x, const RMatrix& y, std::vector<double> grid, int folds, FoldMode mode,
                               std::uint64_t seed, bool has_bias) {
    check_rows(x, y.rows(), "cross_validate");
    if (grid.empty())
        throw InvariantError("cross_validate: lambda grid is empty");
    for (double g : grid)
        if (!(g >= 0.0))
            throw InvariantError("cross_validate: lambda values must be non-negative");
    std::sort(grid.begin(), grid.end());
    const auto fold_sets = fold_rows(x.rows(), folds, mode, seed);
    const Eigen::Index c0 = first_free_column(has_bias);
    const Eigen::Index p = x.cols() - c0;
    const Eigen::Index t = y.cols();

    CrossValidation cv;
    cv.grid = grid;
    cv.mse = RMatrix::Zero(static_cast<Eigen::Index>(grid.size()), t);

    std::vector<char> in_fold(static_cast<std::size_t>(x.rows()));
    for (const auto& val : fold_sets) {
        std::fill(in_fold.begin(), in_fold.end(), 0);
        for (auto r : val)
            in_fold[r] = 1;
        const auto nv = static_cast<Eigen::Index>(val.size());
        const Eigen::Index nt = x.rows() - nv;
        RMatrix xt(nt, p), yt(nt, t), xv(nv, p), yv(nv, t);
        for (Eigen::Index r = 0, it = 0, iv = 0; r < x.rows(); ++r) {
            if (in_fold[r]) {
                xv.row(iv) = x.row(r).tail(p);
                yv.row(iv++) = y.row(r);
            } else {
                xt.row(it) = x.row(r).tail(p);
                yt.row(it++) = y.row(r);
            }
        }
        if (has_bias) {
            const RVector mx = xt.colwise().mean().transpose();
            const RVector my = yt.colwise().mean().transpose();
            xt.rowwise() -= mx.transpose();
            xv.rowwise() -= mx.transpose();
            yt.rowwise() -= my.transpose();
            yv.rowwise() -= my.transpose();
        }
        // pred(lambda) = Q diag(1 / (ev + lambda)) C
        RMatrix q, c;
        RVector ev;
        if (p <= nt) {
            const RMatrix g = xt.transpose() * xt;
            Eigen::SelfAdjointEigenSolver<RMatrix> es(g);
            ev = es.eigenvalues();
            q = xv * es.eigenvectors();
            c = es.eigenvectors().transpose() * (xt.transpose() * yt);
        } else {
            const RMatrix k = xt * xt.transpose();
            Eigen::SelfAdjointEigenSolver<RMatrix> es(k);
            ev = es.eigenvalues();
            q = (xv * xt.transpose()) * es.eigenvectors();
            c = es.eigenvectors().transpose() * yt;
        }
        const double ev_max = ev.size() ? std::max(0.0, ev.maxCoeff()) : 0.0;
        const double cutoff = 1e-13 * std::max(ev_max, 1e-300) * static_cast<double>(std::max(p, nt));
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            RVector inv(ev.size());
            for (Eigen::Index i = 0; i < ev.size(); ++i) {
                const double e = std::max(ev[i], 0.0) + grid[gi];
                inv[i] = (grid[gi] == 0.0 && e <= cutoff) ? 0.0 : 1.0 / e;
            }
            const RMatrix pred = q * inv.asDiagonal() * c;
            const RVector err = (yv - pred).colwise().squaredNorm().transpose() / static_cast<double>(nv);
            cv.mse.row(static_cast<Eigen::Index>(gi)) += err.transpose() / static_cast<double>(fold_sets.size());
        }
    }
    cv.best.resize(static_cast<std::size_t>(t));
    for (Eigen::Index j = 0; j < t; ++j) {
        std::size_t best = 0;
        for (std::size_t gi = 1; gi < grid.size(); ++gi)
            if (cv.mse(static_cast<Eigen::Index>(gi), j) <= cv.mse(static_cast<Eigen::Index>(best), j))
                best = gi;
        cv.best[j] = grid[best];
    }
    return cv;
}

double cross_validate_lambda(const RMatrix& x, const RVector& y, std::vector<double> grid, int folds, FoldMode mode,
                             std::uint64_t seed, bool has_bias) {
    return cross_validate(x, RMatrix(y), std::move(grid), folds, mode, seed, has_bias).best[0];
}

RMatrix LinearReadout::predict(const RMatrix& x) const {
    if (x.cols() != weights.rows())
        throw DimensionError("predict: feature count " + std::to_string(x.cols()) + " does not match readout (" +
                             std::to_string(weights.rows()) + ")");
    if (standardized)
        return zscore_apply(x, stats) * weights;
    return x * weights;
}

RVector predict(const RMatrix& x, const LinearReadout& readout) {
    if (readout.task_count() != 1)
        throw DimensionError("predict: readout has several tasks; use LinearReadout::predict");
    return readout.predict(x).col(0);
}

LinearReadout fit_readout(const RMatrix& x, const RMatrix& y, const FitOptions& options) {
    check_rows(x, y.rows(), "fit_readout");
    LinearReadout out;
    out.standardized = options.standardize;
    RMatrix xs;
    if (options.standardize) {
        out.stats = zscore_fit(x, options.has_bias);
        xs = zscore_apply(x, out.stats);
    } else {
        out.stats.has_bias = options.has_bias;
        out.stats.mean = RVector::Zero(x.cols());
        out.stats.stddev = RVector::Ones(x.cols());
        xs = x;
    }
    if (options.fixed_lambda >= 0.0) {
        out.lambda.assign(static_cast<std::size_t>(y.cols()), options.fixed_lambda);
    } else {
        out.lambda = cross_validate(xs, y, options.lambda_grid, options.folds, options.fold_mode, options.seed,
                                    options.has_bias)
                         .best;
    }
    out.weights.resize(x.cols(), y.cols());
    std::vector<double> distinct = out.lambda;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (double lam : distinct) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            if (out.lambda[j] == lam)
                cols.push_back(j);
        RMatrix ys(y.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k)
            ys.col(static_cast<Eigen::Index>(k)) = y.col(cols[k]);
        const RMatrix w = ridge_fit(xs, ys, lam, options.has_bias);
        for (std::size_t k = 0; k < cols.size(); ++k)
            out.weights.col(cols[k]) = w.col(static_cast<Eigen::Index>(k));
    }
    return out;
}

namespace {

std::vector<double> to_vec(const RVector& v) { return {v.data(), v.data() + v.size()}; }

RVector from_vec(const std::vector<double>& v) {
    return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

std::string LinearReadout::to_json() const {
    nlohmann::json j;
    j["standardized"] = standardized;
    j["has_bias"] = stats.has_bias;
    j["mean"] = to_vec(stats.mean);
    j["stddev"] = to_vec(stats.stddev);
    j["lambda"] = lambda;
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index t = 0; t < weights.cols(); ++t)
        w.push_back(to_vec(weights.col(t)));
    j["weights"] = w;
    return j.dump(1);
}

LinearReadout LinearReadout::from_json(const std::string& text) {
    LinearReadout r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.standardized = j.at("standardized").get<bool>();
        r.stats.has_bias = j.at("has_bias").get<bool>();
        r.stats.mean = from_vec(j.at("mean").get<std::vector<double>>());
        r.stats.stddev = from_vec(j.at("stddev").get<std::vector<double>>());
        r.lambda = j.at("lambda").get<std::vector<double>>();
        const auto& w = j.at("weights");
        r.weights.resize(r.stats.mean.size(), static_cast<Eigen::Index>(w.size()));
        for (std::size_t t = 0; t < w.size(); ++t) {
            const auto col = w[t].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(col.size()) != r.weights.rows())
                throw ConfigError("readout weights have the wrong length");
            r.weights.col(static_cast<Eigen::Index>(t)) = from_vec(col);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cannot parse readout: ") + e.what());
    }
    if (r.lambda.size() != static_cast<std::size_t>(r.weights.cols()))
        throw ConfigError("readout: one lambda per task required");
    return r;
}

void LinearReadout::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f)
        throw Error("cannot open '" + path + "' for writing");
    f << to_json() << '\n';
}

LinearReadout LinearReadout::load(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open readout file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

double r_squared(const RVector& y, const RVector& yhat) {
    if (y.size() != yhat.size())
        throw DimensionError("r_squared: length mismatch");
    if (y.size() < 2)
        throw InvariantError("r_squared: need at least two points");
    const double ss_tot = (y.array() - y.mean()).square().sum();
    if (!(ss_tot > 0.0))
        throw InvariantError("r_squared: target is constant");
    return 1.0 - (y - yhat).squaredNorm() / ss_tot;
}

double nmse(const RVector& y, const RVector& yhat) {
    if (y.size() != yhat.size())
        throw DimensionError("nmse: length mismatch");
    const double norm = y.squaredNorm();
    if (!(norm > 0.0))
        throw InvariantError("nmse: target is identically zero");
    return (y - yhat).squaredNorm() / norm;
}

double stm_capacity(const RVector& y, const RVector& yhat) {
    if (y.size() != yhat.size())
        throw DimensionError("stm_capacity: length mismatch");
    if (y.size() < 2)
        throw InvariantError("stm_capacity: need at least two points");
    const auto n = static_cast<double>(y.size());
    const RVector dy = y.array() - y.mean();
    const RVector dh = yhat.array() - yhat.mean();
    const double vy = dy.squaredNorm() / n;
    const double vh = dh.squaredNorm() / n;
    if (!(vy > 0.0))
        throw InvariantError("stm_capacity: target is constant");
    if (!(vh > 0.0))
        return 0.0;
    const double cov = dy.dot(dh) / n;
    return cov * cov / (vy * vh);
}

double stm_total(const std::vector<double>& capacities) {
    return std::accumulate(capacities.begin(), capacities.end(), 0.0);
}

} // namespace qrc
