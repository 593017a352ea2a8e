#include "doctest.h"
#include "test_support.hpp"

#include "qrc/readout.hpp"
#include "qrc/reservoir.hpp"
#include "qrc/tasks.hpp"

using namespace qrc;
using qrc::testing::max_abs;
using qrc::testing::single_spin;

namespace {

ReservoirConfig proton_config(double tau, int washout, EvolutionEngine engine = EvolutionEngine::propagator) {
    ReservoirConfig c;
    c.tau = tau;
    c.inputs = {{"proton", AngleMap::arcsin, 0.0}};
    c.n_washout = washout;
    c.engine = engine;
    return c;
}

// rotation on every spin, so no population is left to relax on T1 alone
ReservoirConfig global_config(double tau, int washout) {
    ReservoirConfig c = proton_config(tau, washout);
    c.inputs[0].channel = "all";
    return c;
}

ReadoutFn proton_pauli(const SpinSystem& s) {
    return [s](const DensityMatrix& rho) { return pauli_expectations(rho, s, "all"); };
}

InputSeries column(const RVector& v) { return InputSeries(v); }

} // namespace

TEST_CASE("angle maps") {
    CHECK(input_angle(0.0, AngleMap::arcsin) == 0.0);
    CHECK(input_angle(1.0, AngleMap::arcsin) == doctest::Approx(M_PI / 2));
    CHECK(input_angle(0.5, AngleMap::linear) == doctest::Approx(M_PI / 4));
    CHECK_THROWS_AS(input_angle(1.1, AngleMap::arcsin), InvariantError);
    CHECK_THROWS_AS(input_angle(-0.1, AngleMap::linear), InvariantError);
}

TEST_CASE("zero input encodes the identity") {
    const SpinSystem s = diethyl_fluoromalonate();
    const double zero = 0.0;
    const CMatrix u = encode_input({&zero, 1}, proton_config(0.3, 0), s);
    CHECK(max_abs(u - CMatrix::Identity(8, 8)) < 1e-15);
}

TEST_CASE("full-scale input is a quarter turn on the proton") {
    const auto s = qrc::testing::make_system({0.0}, {}, {kInfinity}, {kInfinity}, {1.0});
    ReservoirConfig c = proton_config(0.1, 0);
    c.inputs[0].channel = "s0";
    const double one = 1.0;
    const CMatrix u = encode_input({&one, 1}, c, s);
    CMatrix down = CMatrix::Zero(2, 2);
    down(0, 0) = 1.0;
    const CMatrix out = u * down * u.adjoint();
    CHECK(std::abs(out(0, 0) - 0.5) < 1e-15);
    CHECK(std::abs(out(1, 1) - 0.5) < 1e-15);
    CHECK(std::abs(out(0, 1).real()) < 1e-15);
    CHECK(std::abs(std::abs(out(0, 1).imag()) - 0.5) < 1e-15);
}

TEST_CASE("two-channel encoding routes temperature to protons and humidity to carbons") {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c = proton_config(0.03, 0);
    c.inputs = {{"proton", AngleMap::arcsin, 0.0}, {"carbon", AngleMap::arcsin, 0.0}};
    const double in[2] = {0.3, 0.8};
    const LocalUnitary lu = encode_input_local(in, c, s);
    CHECK(max_abs(lu.gate(1) - rotation_gate(std::asin(0.3))) < 1e-15);
    CHECK(max_abs(lu.gate(0) - rotation_gate(std::asin(0.8))) < 1e-15);
    CHECK(lu.is_identity(2));
    const double wrong[1] = {0.3};
    CHECK_THROWS_AS(encode_input_local(wrong, c, s), DimensionError);
}

TEST_CASE("encoded unitaries are unitary and reject out-of-range inputs") {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c = proton_config(0.3, 0);
    c.inputs = {{"all", AngleMap::linear, 0.05}};
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const double v = u(rng);
        const CMatrix m = encode_input({&v, 1}, c, s);
        CHECK(max_abs(m.adjoint() * m - CMatrix::Identity(8, 8)) < 1e-12);
    }
    const double bad = 1.5;
    CHECK_THROWS_AS(encode_input({&bad, 1}, c, s), InvariantError);
}

TEST_CASE("zero input leaves a closed diagonal state unchanged") {
    const SpinSystem s = with_relaxation(diethyl_fluoromalonate(), RelaxationModel::none);
    for (auto engine : {EvolutionEngine::propagator, EvolutionEngine::rk4}) {
        const Reservoir r(s, proton_config(0.01, 0, engine));
        const auto rho = thermal_state(s);
        const double zero = 0.0;
        CHECK(max_abs(r.step(rho, {&zero, 1}).matrix() - rho.matrix()) < 1e-14);
    }
}

TEST_CASE("a long interval returns to the thermal state") {
    const SpinSystem s = diethyl_fluoromalonate();
    const Reservoir r(s, proton_config(100.0 * 3.1, 0));
    const double in = 0.9;
    const auto out = r.step(thermal_state(s), {&in, 1});
    CHECK(trace_distance(out, thermal_state(s)) < 1e-4);
}

TEST_CASE("single relaxing spin after a quarter turn follows the Bloch solution") {
    const double nu = 50.0, t1 = 1.0, t2 = 2.0, p = 0.3, tau = 0.1;
    const auto s = single_spin(nu, t1, t2, p);
    ReservoirConfig c = proton_config(tau, 0);
    c.inputs[0].channel = "s0";
    const double one = 1.0;
    for (auto engine : {EvolutionEngine::propagator, EvolutionEngine::rk4}) {
        c.engine = engine;
        const auto out = Reservoir(s, c).step(thermal_state(s), {&one, 1});
        // R_x(pi/2) takes (0, 0, p) to (0, -p, 0): rho01 = i p / 2
        const Complex coh = Complex(0, p / 2) * std::exp(Complex(-1.0 / t2, -2 * M_PI * nu) * tau);
        const double pz = p - p * std::exp(-tau / t1);
        CHECK(std::abs(out(0, 1) - coh) < 1e-8);
        CHECK(std::abs((out(0, 0) - out(1, 1)).real() - pz) < 1e-8);
    }
}

TEST_CASE("stationary trajectory gives identical rows") {
    const SpinSystem s = with_relaxation(diethyl_fluoromalonate(), RelaxationModel::none);
    const Reservoir r(s, proton_config(0.3, 5));
    const auto x = run_single_pass(column(RVector::Zero(20)), thermal_state(s), r, proton_pauli(s));
    REQUIRE(x.rows() == 15);
    for (Eigen::Index k = 1; k < x.rows(); ++k)
        CHECK((x.row(k) - x.row(0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("feature matrix bookkeeping") {
    const SpinSystem s = diethyl_fluoromalonate();
    const Reservoir r(s, proton_config(0.3, 100));
    const RVector in = (5.0 * sine_input(1500)).cwiseMin(1.0);
    const auto x = run_protocol(column(in), r, proton_pauli(s));
    CHECK(x.rows() == 1400);
    CHECK(x.cols() == 1 + 3 * 3);
    CHECK(r.evolve_calls() == 1500);
    CHECK_THROWS_AS(run_protocol(column(in.head(50)), r, proton_pauli(s)), InvariantError);
}

TEST_CASE("relaxation gives fading memory") {
    const SpinSystem s = diethyl_fluoromalonate();
    const Reservoir r(s, global_config(0.3, 50));
    std::mt19937_64 rng(21);
    const RVector in = random_sequence(80, 3);
    const auto a = run_single_pass(column(in), random_density_matrix(3, rng), r, proton_pauli(s));
    const auto b = run_single_pass(column(in), random_density_matrix(3, rng), r, proton_pauli(s));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("closed reservoirs preserve trace distance") {
    const SpinSystem s = with_relaxation(diethyl_fluoromalonate(), RelaxationModel::none);
    const Reservoir r(s, proton_config(0.3, 0));
    std::mt19937_64 rng(22);
    auto a = random_density_matrix(3, rng), b = random_density_matrix(3, rng);
    const double d0 = trace_distance(a, b);
    const RVector in = random_sequence(60, 4);
    for (Eigen::Index k = 0; k < in.size(); ++k) {
        a = r.step(a, {&in[k], 1});
        b = r.step(b, {&in[k], 1});
    }
    CHECK(std::abs(trace_distance(a, b) - d0) < 1e-10);
}

TEST_CASE("rewinding without washout reads one step from the thermal state") {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c = proton_config(0.3, 0);
    c.protocol = Protocol::rewinding;
    const Reservoir r(s, c);
    const RVector in = random_sequence(10, 5);
    const auto x = run_rewinding(column(in), r, proton_pauli(s));
    for (Eigen::Index k = 0; k < in.size(); ++k) {
        const RVector expect = proton_pauli(s)(r.step(thermal_state(s), {&in[k], 1}));
        CHECK((x.row(k).transpose() - expect).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("rewinding matches single pass once the washout covers convergence") {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c = proton_config(0.3, 100);
    const RVector in = (5.0 * sine_input(140)).cwiseMin(1.0);
    const Reservoir single(s, c);
    c.protocol = Protocol::rewinding;
    const Reservoir rewind(s, c);
    const auto a = run_protocol(column(in), single, proton_pauli(s));
    const auto b = run_protocol(column(in), rewind, proton_pauli(s));
    REQUIRE(a.rows() == b.rows());
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(rewind.evolve_calls() == protocol_cost(Protocol::rewinding, 140, 100));
}

TEST_CASE("protocol cost model") {
    CHECK(protocol_cost(Protocol::single_pass, 500, 100) == 500);
    CHECK(protocol_cost(Protocol::rewinding, 1500, 1000) == 500 * 1001);
    CHECK(protocol_cost(Protocol::rewinding, 10, 0) == 10);
}

TEST_CASE("washout estimate converges for a relaxing reservoir") {
    const SpinSystem s = diethyl_fluoromalonate();
    const Reservoir r(s, global_config(0.3, 0));
    const RVector in = random_sequence(400, 6);
    const auto est = estimate_washout(column(in), r, proton_pauli(s), 1e-6, 42);
    CHECK(est.converged);
    CHECK(est.n_washout <= 64);
    CHECK(est.max_difference < 1e-6);
}

TEST_CASE("config validation") {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c = proton_config(0.3, 0);
    c.inputs[0].channel = "deuterium";
    CHECK_THROWS(Reservoir(s, c));
    c = proton_config(-1.0, 0);
    CHECK_THROWS_AS(Reservoir(s, c), InvariantError);
}
