#include "doctest.h"
#include "test_support.hpp"

#include "qrc/classical_spin.hpp"
#include "qrc/esn.hpp"
#include "qrc/tasks.hpp"

using namespace qrc;

namespace {

ClassicalSpinState random_classical(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ClassicalSpinState s(3 * n);
    for (Eigen::Index i = 0; i < s.size(); ++i)
        s[i] = u(rng);
    return s;
}

ReservoirConfig classical_config(double tau, int washout) {
    ReservoirConfig c;
    c.tau = tau;
    c.inputs = {{"proton", AngleMap::arcsin, 0.0}};
    c.n_washout = washout;
    return c;
}

double power_iteration_radius(const SparseMatrix& w) {
    // |lambda_max| from growth of ||W^k x||, averaged over the last steps
    RVector x = RVector::Ones(w.rows()).normalized();
    double log_growth = 0.0;
    const int burn = 2000, keep = 2000;
    for (int k = 0; k < burn + keep; ++k) {
        RVector y = w * x;
        const double n = y.norm();
        if (k >= burn)
            log_growth += std::log(n);
        x = y / n;
    }
    return std::exp(log_growth / keep);
}

} // namespace

TEST_CASE("classical field with every Sz at one") {
    const SpinSystem s = with_relaxation(diethyl_fluoromalonate(), RelaxationModel::none);
    const auto eq = classical_equilibrium(s);
    const RVector omega = classical_frequencies(eq, s);
    for (int i = 0; i < 3; ++i) {
        double field = s.frequencies_hz[i];
        for (int j = 0; j < 3; ++j)
            if (j != i)
                field += s.couplings_hz(i, j);
        CHECK(omega[i] == doctest::Approx(2 * M_PI * field).epsilon(1e-14));
    }
    // transverse components rotate rigidly at those frequencies
    ClassicalSpinState st = eq;
    st[3] = 0.6;
    st[5] = 0.8;
    const double t = 0.004;
    const auto out = classical_evolve(st, s, t);
    const RVector w = classical_frequencies(st, s);
    CHECK(std::abs(out[3] - 0.6 * std::cos(w[1] * t)) < 1e-9);
    CHECK(std::abs(out[4] - 0.6 * std::sin(w[1] * t)) < 1e-9);
    CHECK(out[5] == doctest::Approx(0.8));
}

TEST_CASE("classical equilibrium is a fixed point") {
    const SpinSystem s = qrc::testing::single_spin(30.0, 1.5, 0.4, 0.1);
    const auto eq = classical_equilibrium(s);
    CHECK(classical_rhs(eq, s).cwiseAbs().maxCoeff() == 0.0);
    ClassicalOptions scaled;
    scaled.polarization_scaled = true;
    CHECK(classical_equilibrium(s, scaled)[2] == 0.1);
}

TEST_CASE("classical derivative matches the cross-product form") {
    const SpinSystem s = diethyl_fluoromalonate();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto st = random_classical(3, seed);
        CHECK((classical_rhs(st, s) - reference::classical_rhs_cross(st, s)).cwiseAbs().maxCoeff() < 1e-12);
        ClassicalOptions o;
        o.polarization_scaled = true;
        CHECK((classical_rhs(st, s, o) - reference::classical_rhs_cross(st, s, o)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("classical input rotation") {
    const SpinSystem s = diethyl_fluoromalonate();
    ClassicalSpinState st = classical_equilibrium(s);
    classical_rotate(st, 1, M_PI / 2);
    CHECK(std::abs(st[3]) < 1e-15);
    CHECK(st[4] == doctest::Approx(-1.0));
    CHECK(std::abs(st[5]) < 1e-15);

    const ClassicalReservoir r(s, classical_config(0.3, 0));
    const double zero = 0.0, one = 1.0;
    const auto eq = r.initial_state();
    CHECK((r.step(eq, {&zero, 1}) - classical_evolve(eq, s, 0.3)).cwiseAbs().maxCoeff() == 0.0);
    const auto kicked = r.step(eq, {&one, 1});
    CHECK(kicked[5] > 0.0);
    CHECK(kicked[5] < 1.0);
    CHECK(std::hypot(kicked[3], kicked[4]) < 1.0);
}

TEST_CASE("classical reservoir emits all components") {
    const SpinSystem s = diethyl_fluoromalonate();
    const ClassicalReservoir r(s, classical_config(0.3, 10));
    const RVector in = random_sequence(30, 1);
    const auto x = run_classical(InputSeries(in), r, classical_components);
    CHECK(x.rows() == 20);
    CHECK(x.cols() == 1 + 9);
}

TEST_CASE("closed classical evolution conserves vector lengths") {
    const SpinSystem s = with_relaxation(diethyl_fluoromalonate(), RelaxationModel::none);
    const auto st = random_classical(3, 42);
    const auto out = classical_evolve(st, s, 1.0);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(out.segment<3>(3 * i).norm() - st.segment<3>(3 * i).norm()) < 1e-6);
    ClassicalOptions rk;
    rk.engine = EvolutionEngine::rk4;
    const auto stepped = classical_evolve(st, s, 1.0, rk);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(stepped.segment<3>(3 * i).norm() - st.segment<3>(3 * i).norm()) < 1e-6);
}

TEST_CASE("closed form and RK4 classical evolution agree") {
    const SpinSystem s = diethyl_fluoromalonate();
    ClassicalOptions rk;
    rk.engine = EvolutionEngine::rk4;
    rk.step_tolerance = 1e-15;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto st = random_classical(3, 100 + seed);
        for (double t : {1e-3, 0.03, 0.3}) {
            const auto exact = classical_evolve(st, s, t);
            const auto stepped = classical_evolve(st, s, t, rk);
            CHECK((exact - stepped).cwiseAbs().maxCoeff() < 1e-10);
        }
        ClassicalOptions scaled_rk = rk, scaled;
        scaled_rk.polarization_scaled = scaled.polarization_scaled = true;
        CHECK((classical_evolve(st, s, 0.3, scaled) - classical_evolve(st, s, 0.3, scaled_rk)).cwiseAbs().maxCoeff() <
              1e-10);
    }
}

TEST_CASE("classical spectral readout") {
    const SpinSystem s = diethyl_fluoromalonate();
    FidSettings fs;
    fs.n_points = 2048;
    const ClassicalSpectralReadout ro(s, "proton", fs);
    const auto regions = ro.regions();
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].lo_hz == doctest::Approx(201.0 - 160.6 - 48.0 - 25.0));
    CHECK(regions[0].hi_hz == doctest::Approx(201.0 + 160.6 + 48.0 + 25.0));
    const auto eq = classical_equilibrium(s);
    const auto fid = ro.fid(eq);
    CHECK(std::abs(fid.samples[0] - Complex(0.0, 0.5)) < 1e-15);
    const RVector x = ro(eq);
    CHECK(x[0] == 1.0);
    CHECK(x.size() > 3);
}

TEST_CASE("ESN parameter validation") {
    CHECK_THROWS_AS(esn_init({0, 0.1, 0.9, 1, 0}), ConfigError);
    CHECK_THROWS_AS(esn_init({10, 0.0, 0.9, 1, 0}), ConfigError);
    CHECK_THROWS_AS(esn_init({10, 0.1, -1.0, 1, 0}), ConfigError);
    CHECK_THROWS_AS(esn_init({10, 0.1, 0.9, 0, 0}), ConfigError);
}

TEST_CASE("ESN matrices") {
    const auto m = esn_init({500, 0.025, 0.99, 1, 3});
    CHECK(m.w_in.rows() == 500);
    CHECK(m.w_in.cols() == 2);
    CHECK((m.w_in.array().abs() == 1.0).all());
    CHECK(m.w.nonZeros() == static_cast<Eigen::Index>(std::ceil(0.025 * 500 * 500)));
    CHECK(std::abs(spectral_radius(m.w) - 0.99) < 1e-6);
    CHECK(std::abs(power_iteration_radius(m.w) - 0.99) < 2e-2);
    const auto dense = esn_init({40, 1.0, 0.5, 2, 1});
    CHECK(dense.w.nonZeros() == 1600);
}

TEST_CASE("dense and Arnoldi spectral radii agree") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto m = esn_init({300, 0.05, 1.3, 1, seed});
        const double d = spectral_radius(m.w, EigenMethod::dense);
        const double a = spectral_radius(m.w, EigenMethod::arnoldi);
        CHECK(std::abs(d - a) < 1e-8);
        CHECK(std::abs(d - 1.3) < 1e-10);
    }
}

TEST_CASE("ESN dynamics") {
    SUBCASE("no recurrence gives a constant state") {
        EsnMatrices m = esn_init({20, 0.1, 0.9, 1, 5});
        m.w.setZero();
        const RMatrix in = RMatrix::Constant(10, 1, 0.3);
        const RMatrix x = esn_run(in, m);
        RVector u(2);
        u << 1.0, 0.3;
        const RVector expect = (m.w_in * u).array().tanh();
        for (Eigen::Index k = 0; k < 10; ++k)
            CHECK((x.row(k).tail(20).transpose() - expect).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("states stay in the open unit interval and are deterministic") {
        const auto m = esn_init({100, 0.1, 0.99, 1, 6});
        const RMatrix in(random_sequence(200, 7));
        const RMatrix x = esn_run(in, m, 50);
        CHECK(x.rows() == 150);
        CHECK((x.col(0).array() == 1.0).all());
        CHECK(x.rightCols(100).cwiseAbs().maxCoeff() < 1.0);
        CHECK(x == esn_run(in, esn_init({100, 0.1, 0.99, 1, 6}), 50));
    }
    SUBCASE("echo state property with zero input") {
        const auto m = esn_init({500, 0.025, 0.99, 1, 0});
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(-1, 1);
        RVector a(500), b(500);
        for (int i = 0; i < 500; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        const RMatrix zeros = RMatrix::Zero(500, 1);
        CHECK((esn_final_state(zeros, m, a) - esn_final_state(zeros, m, b)).norm() < 1e-6);
    }
    CHECK_THROWS_AS(esn_run(RMatrix::Zero(5, 2), esn_init({10, 0.2, 0.9, 1, 0})), DimensionError);
}
