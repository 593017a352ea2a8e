#include "qrc/classical_spin.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace qrc {

namespace {

double inverse_time(double t) { return std::isfinite(t) ? 1.0 / t : 0.0; }

double equilibrium_z(const SpinSystem& system, int spin, const ClassicalOptions& options) {
    return options.polarization_scaled ? system.polarizations[spin] : 1.0;
}

void check_state(const ClassicalSpinState& state, const SpinSystem& system) {
    if (state.size() != 3 * system.n_spins)
        throw DimensionError("classical state has " + std::to_string(state.size()) + " components, expected " +
                             std::to_string(3 * system.n_spins));
}

} // namespace

RVector classical_frequencies(const ClassicalSpinState& state, const SpinSystem& system) {
    check_state(state, system);
    const int n = system.n_spins;
    RVector omega(n);
    for (int i = 0; i < n; ++i) {
        double field = system.frequencies_hz[i];
        for (int j = 0; j < n; ++j)
            if (j != i)
                field += system.couplings_hz(std::min(i, j), std::max(i, j)) * state[3 * j + 2];
        omega[i] = 2.0 * M_PI * field;
    }
    return omega;
}

ClassicalSpinState classical_rhs(const ClassicalSpinState& state, const SpinSystem& system,
                                 const ClassicalOptions& options) {
    const RVector omega = classical_frequencies(state, system);
    ClassicalSpinState d(state.size());
    for (int i = 0; i < system.n_spins; ++i) {
        const double sx = state[3 * i], sy = state[3 * i + 1], sz = state[3 * i + 2];
        const double r2 = inverse_time(system.t2_s[i]);
        const double r1 = inverse_time(system.t1_s[i]);
        d[3 * i] = -omega[i] * sy - sx * r2;
        d[3 * i + 1] = omega[i] * sx - sy * r2;
        d[3 * i + 2] = (equilibrium_z(system, i, options) - sz) * r1;
    }
    return d;
}

namespace reference {

ClassicalSpinState classical_rhs_cross(const ClassicalSpinState& state, const SpinSystem& system,
                                       const ClassicalOptions& options) {
    check_state(state, system);
    const int n = system.n_spins;
    // symmetric coupling matrix from the upper triangle
    RMatrix j = RMatrix::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            j(a, b) = j(b, a) = system.couplings_hz(a, b);
    RVector sz(n);
    for (int a = 0; a < n; ++a)
        sz[a] = state[3 * a + 2];
    const RVector nu = Eigen::Map<const RVector>(system.frequencies_hz.data(), n);
    const RVector field = 2.0 * M_PI * (nu + j * sz);
    ClassicalSpinState d(3 * n);
    for (int a = 0; a < n; ++a) {
        const Eigen::Vector3d s = state.segment<3>(3 * a);
        const Eigen::Vector3d b(0.0, 0.0, field[a]);
        Eigen::Vector3d ds = b.cross(s);
        const double t2 = system.t2_s[a], t1 = system.t1_s[a];
        if (std::isfinite(t2)) {
            ds.x() -= s.x() / t2;
            ds.y() -= s.y() / t2;
        }
        if (std::isfinite(t1))
            ds.z() += (equilibrium_z(system, a, options) - s.z()) / t1;
        d.segment<3>(3 * a) = ds;
    }
    return d;
}

} // namespace reference

void classical_rotate(ClassicalSpinState& state, int spin, double theta, double tilt) {
    const Eigen::Vector3d axis(std::cos(tilt), 0.0, std::sin(tilt));
    const Eigen::Matrix3d r = Eigen::AngleAxisd(theta, axis).toRotationMatrix();
    state.segment<3>(3 * spin) = r * Eigen::Vector3d(state.segment<3>(3 * spin));
}

namespace {

ClassicalSpinState evolve_exact(const ClassicalSpinState& state, const SpinSystem& system, double t,
                                const ClassicalOptions& options) {
    const int n = system.n_spins;
    RVector z_integral(n);
    ClassicalSpinState s = state;
    for (int j = 0; j < n; ++j) {
        const double z0 = state[3 * j + 2];
        const double eq = equilibrium_z(system, j, options);
        const double r1 = inverse_time(system.t1_s[j]);
        if (r1 == 0.0) {
            z_integral[j] = z0 * t;
        } else {
            const double decay = std::exp(-r1 * t);
            z_integral[j] = eq * t + (z0 - eq) * (-std::expm1(-r1 * t)) / r1;
            s[3 * j + 2] = eq + (z0 - eq) * decay;
        }
    }
    for (int i = 0; i < n; ++i) {
        double phase = system.frequencies_hz[i] * t;
        for (int j = 0; j < n; ++j)
            if (j != i)
                phase += system.couplings_hz(std::min(i, j), std::max(i, j)) * z_integral[j];
        phase *= 2.0 * M_PI;
        const double damp = std::exp(-inverse_time(system.t2_s[i]) * t);
        const Complex m = Complex(state[3 * i], state[3 * i + 1]) * std::polar(damp, phase);
        s[3 * i] = m.real();
        s[3 * i + 1] = m.imag();
    }
    return s;
}

double omega_bound(const ClassicalSpinState& state, const SpinSystem& system, const ClassicalOptions& options) {
    const int n = system.n_spins;
    double z_max = 0.0;
    for (int j = 0; j < n; ++j)
        z_max = std::max({z_max, std::abs(state[3 * j + 2]), std::abs(equilibrium_z(system, j, options))});
    double bound = 0.0;
    for (int i = 0; i < n; ++i) {
        double field = std::abs(system.frequencies_hz[i]);
        for (int j = 0; j < n; ++j)
            if (j != i)
                field += std::abs(system.couplings_hz(std::min(i, j), std::max(i, j))) * z_max;
        bound = std::max(bound, 2.0 * M_PI * field + inverse_time(system.t2_s[i]) + inverse_time(system.t1_s[i]));
    }
    return bound;
}

} // namespace

ClassicalSpinState classical_evolve(const ClassicalSpinState& state, const SpinSystem& system, double duration,
                                    const ClassicalOptions& options) {
    check_state(state, system);
    if (duration < 0.0)
        throw InvariantError("classical_evolve: negative duration");
    if (duration == 0.0)
        return state;
    ClassicalSpinState s;
    if (options.engine == EvolutionEngine::propagator) {
        s = evolve_exact(state, system, duration, options);
    } else {
        double h_max = std::min(duration / 100.0, options.max_step);
        const double w = omega_bound(state, system, options);
        if (options.step_tolerance > 0.0 && w > 0.0)
            h_max = std::min(h_max, std::pow(120.0 * options.step_tolerance, 0.2) / w);
        const auto steps = static_cast<std::size_t>(std::ceil(duration / h_max - 1e-9));
        const double h = duration / static_cast<double>(steps);
        s = state;
        for (std::size_t k = 0; k < steps; ++k) {
            const auto k1 = classical_rhs(s, system, options);
            const auto k2 = classical_rhs(s + 0.5 * h * k1, system, options);
            const auto k3 = classical_rhs(s + 0.5 * h * k2, system, options);
            const auto k4 = classical_rhs(s + h * k3, system, options);
            s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    if (!s.allFinite())
        throw NumericalError("classical_evolve: state became non-finite");
    return s;
}

ClassicalSpinState classical_equilibrium(const SpinSystem& system, const ClassicalOptions& options) {
    ClassicalSpinState s = ClassicalSpinState::Zero(3 * system.n_spins);
    for (int i = 0; i < system.n_spins; ++i)
        s[3 * i + 2] = equilibrium_z(system, i, options);
    return s;
}

ClassicalReservoir::ClassicalReservoir(SpinSystem system, ReservoirConfig config, ClassicalOptions options)
    : system_(std::move(system)), config_(std::move(config)), options_(options) {
    config_.validate(system_);
}

ClassicalSpinState ClassicalReservoir::step(const ClassicalSpinState& state, std::span<const double> input) const {
    if (input.size() != config_.inputs.size())
        throw DimensionError("classical step: input width does not match the assignments");
    ClassicalSpinState s = state;
    for (std::size_t a = 0; a < config_.inputs.size(); ++a) {
        const auto& as = config_.inputs[a];
        const double theta = input_angle(input[a], as.map);
        for (int spin : system_.channel(as.channel))
            classical_rotate(s, spin, theta, as.tilt);
    }
    return classical_evolve(s, system_, config_.tau, options_);
}

RVector classical_components(const ClassicalSpinState& state) {
    RVector out(1 + state.size());
    out[0] = 1.0;
    out.tail(state.size()) = state;
    return out;
}

std::vector<FrequencyRegion> classical_regions(const SpinSystem& system, const std::string& channel,
                                               double half_width_hz) {
    std::vector<FrequencyRegion> regions;
    for (int i : system.channel(channel)) {
        double spread = 0.0;
        for (int j = 0; j < system.n_spins; ++j)
            if (j != i)
                spread += std::abs(system.couplings_hz(std::min(i, j), std::max(i, j)));
        regions.push_back({system.frequencies_hz[i] - spread - half_width_hz,
                           system.frequencies_hz[i] + spread + half_width_hz});
    }
    return merge_regions(std::move(regions));
}

ClassicalSpectralReadout::ClassicalSpectralReadout(const SpinSystem& system, const std::string& channel,
                                                   const FidSettings& settings)
    : system_(system), channel_(channel), settings_(settings),
      regions_(classical_regions(system, channel, settings.half_width_hz)) {}

FidSignal ClassicalSpectralReadout::fid(const ClassicalSpinState& state) const {
    ClassicalSpinState s = state;
    const auto& spins = system_.channel(channel_);
    for (int spin : spins)
        classical_rotate(s, spin, 0.5 * M_PI);
    const RVector omega = classical_frequencies(s, system_);
    FidSignal f;
    f.dt = settings_.dt;
    f.channel = channel_;
    f.samples.assign(settings_.n_points, Complex(0.0, 0.0));
    for (int spin : spins) {
        const Complex amp(0.5 * s[3 * spin], -0.5 * s[3 * spin + 1]);
        const Complex rate(-inverse_time(system_.t2_s[spin]), -omega[spin]);
        for (std::size_t j = 0; j < settings_.n_points; ++j)
            f.samples[j] += amp * std::exp(rate * (settings_.dt * static_cast<double>(j)));
    }
    return f;
}

RVector ClassicalSpectralReadout::operator()(const ClassicalSpinState& state) const {
    return extract_features(fid_to_spectrum(fid(state)), regions_);
}

FeatureMatrix run_classical(const InputSeries& inputs, const ClassicalReservoir& reservoir,
                            const ClassicalReadoutFn& readout) {
    const int wo = reservoir.config().n_washout;
    if (inputs.rows() < wo)
        throw InvariantError("run_classical: input length is shorter than the washout");
    FeatureMatrix out;
    ClassicalSpinState s = reservoir.initial_state();
    std::vector<double> row(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        for (Eigen::Index c = 0; c < inputs.cols(); ++c)
            row[c] = inputs(k, c);
        s = reservoir.step(s, row);
        if (k < wo)
            continue;
        const RVector f = readout(s);
        if (out.size() == 0)
            out.resize(inputs.rows() - wo, f.size());
        out.row(k - wo) = f.transpose();
    }
    return out;
}

} // namespace qrc
