#include "doctest.h"
#include "test_support.hpp"

#include "qrc/learning.hpp"

#include <algorithm>

using namespace qrc;

namespace {

RMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    RMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = g(rng);
    return m;
}

RMatrix with_bias(const RMatrix& x) {
    RMatrix out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

/// Plain gradient descent on the ridge objective.
RVector gradient_descent(const RMatrix& x, const RVector& y, double lambda, bool has_bias) {
    RVector pen = RVector::Constant(x.cols(), lambda);
    if (has_bias)
        pen[0] = 0.0;
    const RMatrix g = x.transpose() * x;
    const RVector xty = x.transpose() * y;
    const double l = 2.0 * (Eigen::SelfAdjointEigenSolver<RMatrix>(g).eigenvalues().maxCoeff() + lambda);
    RVector w = RVector::Zero(x.cols());
    for (int it = 0; it < 1'000'000; ++it) {
        const RVector grad = 2.0 * (g * w - xty) + 2.0 * pen.cwiseProduct(w);
        if (grad.norm() < 1e-14)
            break;
        w -= grad / l;
    }
    return w;
}

} // namespace

TEST_CASE("z-score statistics") {
    RMatrix x(2, 3);
    x << 1, 1, 5, 1, 3, 5;
    const auto st = zscore_fit(x);
    CHECK(st.mean[1] == doctest::Approx(2.0));
    CHECK(st.stddev[1] == doctest::Approx(1.0));
    CHECK(st.stddev[2] == 1.0);
    const RMatrix z = zscore_apply(x, st);
    CHECK(z(0, 0) == 1.0);
    CHECK(z(0, 1) == doctest::Approx(-1.0));
    CHECK(z(1, 1) == doctest::Approx(1.0));
    CHECK(z.col(2).cwiseAbs().maxCoeff() == 0.0);

    const RMatrix r = with_bias(random_matrix(40, 5, 1) * 3.0 + RMatrix::Constant(40, 5, 7.0));
    const RMatrix zr = zscore_apply(r, zscore_fit(r));
    const auto again = zscore_fit(zr);
    CHECK(again.mean.tail(5).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((again.stddev.tail(5).array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(zscore_apply(RMatrix::Ones(3, 2), st), DimensionError);
}

TEST_CASE("ridge special cases") {
    SUBCASE("identity design without bias interpolates") {
        const RVector y = RVector::LinSpaced(4, -1, 2);
        CHECK((ridge_fit(RMatrix::Identity(4, 4), y, 0.0, false) - y).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("three points on a line") {
        RMatrix x(3, 2);
        x << 1, 0, 1, 1, 1, 2;
        const RVector y = (RVector(3) << 1.5, 3.5, 5.5).finished();
        CHECK((x * ridge_fit(x, y, 0.0) - y).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("singular without regularization") {
        RMatrix x(4, 3);
        x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
        CHECK_THROWS_AS(ridge_fit(x, RVector(RVector::Ones(4)), 0.0), NumericalError);
        CHECK_NOTHROW(ridge_fit(x, RVector(RVector::Ones(4)), 1e-3));
    }
    CHECK_THROWS_AS(ridge_fit(RMatrix(RMatrix::Ones(3, 2)), RVector(RVector::Ones(4)), 0.1), DimensionError);
    CHECK_THROWS(ridge_fit(RMatrix(RMatrix::Ones(3, 2)), RVector(RVector::Ones(3)), -1.0));
}

TEST_CASE("ridge matches a gradient-descent oracle") {
    const RMatrix x = with_bias(random_matrix(50, 9, 2));
    const RVector y = random_matrix(50, 1, 3).col(0);
    for (bool bias : {true, false}) {
        const RVector w = ridge_fit(x, y, 0.1, bias);
        CHECK((w - gradient_descent(x, y, 0.1, bias)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("wide designs take the dual route and agree with the primal solution") {
    const RMatrix x = with_bias(random_matrix(30, 80, 4));
    const RVector y = random_matrix(30, 1, 5).col(0);
    const double lambda = 0.3;
    const RVector w = ridge_fit(x, y, lambda);
    CHECK((w - gradient_descent(x, y, lambda, true)).cwiseAbs().maxCoeff() < 1e-6);
    // perturbation test: w is the minimizer
    const double f0 = ridge_objective(x, y, w, lambda);
    for (Eigen::Index j = 0; j < w.size(); ++j)
        for (double d : {1e-4, -1e-4}) {
            RVector p = w;
            p[j] += d;
            CHECK(ridge_objective(x, y, p, lambda) >= f0);
        }
}

TEST_CASE("ridge solution is a strict minimizer") {
    const RMatrix x = with_bias(random_matrix(60, 6, 6));
    const RVector y = random_matrix(60, 1, 7).col(0);
    const RVector w = ridge_fit(x, y, 0.5);
    const double f0 = ridge_objective(x, y, w, 0.5);
    for (Eigen::Index j = 0; j < w.size(); ++j)
        for (double d : {1e-4, -1e-4}) {
            RVector p = w;
            p[j] += d;
            CHECK(ridge_objective(x, y, p, 0.5) > f0);
        }
}

TEST_CASE("cross validation") {
    SUBCASE("single grid value") {
        const RMatrix x = with_bias(random_matrix(40, 3, 8));
        CHECK(cross_validate_lambda(x, x.col(1), {0.7}) == 0.7);
    }
    SUBCASE("noiseless linear data prefers the smallest lambda") {
        const RMatrix x = with_bias(random_matrix(100, 4, 9));
        const RVector y = x * RVector::LinSpaced(5, 0.5, 2.5);
        const auto grid = default_lambda_grid();
        CHECK(cross_validate_lambda(x, y, grid) == grid.front());
        const auto cv = cross_validate(x, y, grid);
        for (std::size_t g = 1; g < grid.size(); ++g)
            CHECK(cv.mse(g, 0) >= cv.mse(g - 1, 0));
    }
    SUBCASE("noisy data: the choice is a grid member with minimal mean MSE") {
        const RMatrix x = with_bias(random_matrix(120, 20, 10));
        const RVector y = x.col(1) + 2.0 * random_matrix(120, 1, 11).col(0);
        std::vector<double> grid;
        for (int e = -8; e <= 2; ++e)
            grid.push_back(std::pow(10.0, e));
        for (auto mode : {FoldMode::contiguous, FoldMode::shuffled}) {
            const auto cv = cross_validate(x, y, grid, 10, mode, 3);
            const double best = cv.best[0];
            const auto it = std::find(grid.begin(), grid.end(), best);
            REQUIRE(it != grid.end());
            const auto g = it - grid.begin();
            CHECK(cv.mse(g, 0) == cv.mse.col(0).minCoeff());
        }
    }
    SUBCASE("fold mse equals explicit refits") {
        const RMatrix x = with_bias(random_matrix(50, 4, 12));
        const RVector y = random_matrix(50, 1, 13).col(0);
        const std::vector<double> grid{1e-3, 1.0};
        const auto cv = cross_validate(x, y, grid, 5);
        const auto folds = fold_rows(50, 5, FoldMode::contiguous, 0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double total = 0.0;
            for (const auto& fold : folds) {
                std::vector<Eigen::Index> train;
                for (Eigen::Index r = 0; r < 50; ++r)
                    if (std::find(fold.begin(), fold.end(), r) == fold.end())
                        train.push_back(r);
                const RVector w = ridge_fit(RMatrix(x(train, Eigen::all)), RVector(y(train)), grid[g]);
                total += (x(fold, Eigen::all) * w - y(fold)).squaredNorm() / static_cast<double>(fold.size());
            }
            CHECK(cv.mse(g, 0) == doctest::Approx(total / 5).epsilon(1e-9));
        }
    }
    CHECK_THROWS(cross_validate_lambda(RMatrix::Ones(5, 2), RVector::Ones(5), {}));
    CHECK_THROWS(cross_validate_lambda(RMatrix::Ones(5, 2), RVector::Ones(5), {1.0}, 10));
}

TEST_CASE("fold layouts") {
    const auto c = fold_rows(23, 5, FoldMode::contiguous, 0);
    REQUIRE(c.size() == 5);
    std::vector<Eigen::Index> all;
    for (const auto& f : c) {
        for (std::size_t i = 1; i < f.size(); ++i)
            CHECK(f[i] == f[i - 1] + 1);
        all.insert(all.end(), f.begin(), f.end());
    }
    std::sort(all.begin(), all.end());
    for (Eigen::Index i = 0; i < 23; ++i)
        CHECK(all[i] == i);
    CHECK(fold_rows(23, 5, FoldMode::shuffled, 1) == fold_rows(23, 5, FoldMode::shuffled, 1));
    CHECK(fold_rows(23, 5, FoldMode::shuffled, 1) != c);
}

TEST_CASE("prediction") {
    LinearReadout r;
    r.standardized = false;
    r.weights = RMatrix::Zero(4, 1);
    r.weights(0, 0) = 2.5;
    r.lambda = {0.0};
    const RMatrix x = with_bias(random_matrix(7, 3, 14));
    CHECK((r.predict(x).array() == 2.5).all());

    FitOptions opt;
    opt.fixed_lambda = 0.0;
    const RVector y = random_matrix(30, 1, 15).col(0);
    const RMatrix xt = with_bias(random_matrix(30, 5, 16));
    const RVector yt = xt * RVector::LinSpaced(6, -1, 1);
    CHECK((predict(xt, fit_readout(xt, yt, opt)) - yt).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_THROWS_AS(r.predict(RMatrix::Ones(3, 2)), DimensionError);
    (void)y;
}

TEST_CASE("multitask columns are independent") {
    const RMatrix x = with_bias(random_matrix(200, 8, 17));
    const RMatrix y = random_matrix(200, 20, 18);
    const auto all = fit_readout(x, y);
    REQUIRE(all.task_count() == 20);
    const RMatrix pred = all.predict(x);
    CHECK(pred.cols() == 20);
    for (Eigen::Index t : {0, 7, 19}) {
        const auto one = fit_readout(x, RMatrix(y.col(t)));
        CHECK(one.lambda[0] == all.lambda[t]);
        CHECK((one.predict(x).col(0) - pred.col(t)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("standardized pipeline is invariant to positive column rescaling") {
    const RMatrix x = with_bias(random_matrix(150, 6, 19));
    const RVector y = x.col(2) - x.col(4) + 0.2 * random_matrix(150, 1, 20).col(0);
    RMatrix scaled = x;
    scaled.col(3) *= 1e3;
    scaled.col(5) *= 0.01;
    const RVector a = predict(x, fit_readout(x, RMatrix(y)));
    const RVector b = predict(scaled, fit_readout(scaled, RMatrix(y)));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("readout serialization round trip") {
    const RMatrix x = with_bias(random_matrix(80, 4, 21));
    const auto r = fit_readout(x, random_matrix(80, 2, 22));
    const auto back = LinearReadout::from_json(r.to_json());
    CHECK((back.predict(x) - r.predict(x)).cwiseAbs().maxCoeff() == 0.0);
    const auto dir = qrc::testing::scratch_dir("readout_json");
    r.save((dir / "r.json").string());
    CHECK((LinearReadout::load((dir / "r.json").string()).weights - r.weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS(LinearReadout::from_json("{}"));
}

TEST_CASE("R2 examples") {
    const RVector y = (RVector(3) << 0, 1, 2).finished();
    CHECK(r_squared(y, y) == 1.0);
    CHECK(r_squared(y, RVector::Constant(3, 1.0)) == doctest::Approx(0.0));
    CHECK(r_squared(y, RVector::Zero(3)) == doctest::Approx(-1.5));
    CHECK_THROWS(r_squared(RVector::Ones(3), y));
}

TEST_CASE("NMSE examples") {
    const RVector y = (RVector(2) << 1, 1).finished();
    CHECK(nmse(y, y) == 0.0);
    CHECK(nmse(y, RVector::Zero(2)) == 1.0);
    CHECK(nmse(y, (RVector(2) << 0, 2).finished()) == doctest::Approx(1.0));
    CHECK_THROWS(nmse(RVector::Zero(2), y));
}

TEST_CASE("R2 and NMSE satisfy the cross-metric identity") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const RVector y = random_matrix(30, 1, seed).col(0).array() + 0.3 * static_cast<double>(seed % 4);
        const RVector yhat = y + 0.5 * random_matrix(30, 1, seed + 100).col(0);
        const double ss_tot = (y.array() - y.mean()).square().sum();
        CHECK(std::abs(r_squared(y, yhat) - (1.0 - nmse(y, yhat) * y.squaredNorm() / ss_tot)) < 1e-12);
    }
}

TEST_CASE("memory capacity") {
    const RVector y = random_matrix(1000, 1, 30).col(0);
    CHECK(stm_capacity(y, 3.0 * y.array() - 2.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stm_capacity(y, RVector::Constant(1000, 4.0)) == 0.0);
    const RVector a = random_matrix(10000, 1, 31).col(0), b = random_matrix(10000, 1, 32).col(0);
    CHECK(stm_capacity(a, b) < 0.01);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const RVector u = random_matrix(50, 1, seed).col(0);
        const RVector v = u + random_matrix(50, 1, seed + 77).col(0) * (0.1 * static_cast<double>(seed));
        const double c = stm_capacity(u, v);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0 + 1e-12);
    }
    CHECK(stm_total({0.5, 0.25, 0.125}) == 0.875);
}
