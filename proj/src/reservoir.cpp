#include "qrc/reservoir.hpp"

#include <cmath>
#include <random>

namespace qrc {

void ReservoirConfig::validate(const SpinSystem& system) const {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw InvariantError("reservoir: tau must be positive and finite");
    if (n_washout < 0)
        throw InvariantError("reservoir: washout length must be non-negative");
    for (const auto& a : inputs)
        if (!system.has_channel(a.channel))
            throw ConfigError("reservoir: input channel '" + a.channel + "' does not exist in the spin system");
}

double input_angle(double normalized, AngleMap map) {
    if (!(normalized >= 0.0 && normalized <= 1.0))
        throw InvariantError("normalized input " + std::to_string(normalized) + " outside [0, 1]");
    switch (map) {
    case AngleMap::arcsin:
        return std::asin(normalized);
    case AngleMap::linear:
        return 0.5 * M_PI * normalized;
    }
    return 0.0;
}

LocalUnitary encode_input_local(std::span<const double> normalized, const ReservoirConfig& config,
                                const SpinSystem& system) {
    if (normalized.size() != config.inputs.size())
        throw DimensionError("encode_input: got " + std::to_string(normalized.size()) + " inputs for " +
                             std::to_string(config.inputs.size()) + " assignments");
    LocalUnitary u(system.n_spins);
    for (std::size_t a = 0; a < config.inputs.size(); ++a) {
        const auto& assignment = config.inputs[a];
        const double theta = input_angle(normalized[a], assignment.map);
        const auto gate = rotation_gate(theta, assignment.tilt);
        for (int spin : system.channel(assignment.channel))
            u.compose(spin, gate);
    }
    return u;
}

CMatrix encode_input(std::span<const double> normalized, const ReservoirConfig& config, const SpinSystem& system) {
    return encode_input_local(normalized, config, system).to_dense();
}

Reservoir::Reservoir(SpinSystem system, ReservoirConfig config)
    : system_(std::move(system)), config_(std::move(config)) {
    config_.validate(system_);
    model_ = std::make_unique<LindbladModel>(system_);
    if (config_.engine == EvolutionEngine::propagator)
        propagator_ = std::make_unique<Propagator>(*model_, config_.tau);
}

DensityMatrix Reservoir::free_evolution(const DensityMatrix& rho) const {
    ++evolve_calls_;
    if (propagator_)
        return propagator_->apply(rho);
    return evolve(rho, *model_, config_.tau, config_.step_control);
}

DensityMatrix Reservoir::step(const DensityMatrix& rho, std::span<const double> input) const {
    const auto u = encode_input_local(input, config_, system_);
    return free_evolution(u.apply(rho));
}

namespace {

std::span<const double> row_span(const InputSeries& inputs, Eigen::Index k, std::vector<double>& scratch) {
    scratch.resize(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index c = 0; c < inputs.cols(); ++c)
        scratch[c] = inputs(k, c);
    return scratch;
}

} // namespace

FeatureMatrix run_single_pass(const InputSeries& inputs, const DensityMatrix& initial, const Reservoir& reservoir,
                              const ReadoutFn& readout) {
    const int wo = reservoir.config().n_washout;
    if (inputs.rows() < wo)
        throw InvariantError("run_single_pass: input length " + std::to_string(inputs.rows()) +
                             " is shorter than the washout " + std::to_string(wo));
    FeatureMatrix out;
    DensityMatrix rho = initial;
    std::vector<double> scratch;
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        rho = reservoir.step(rho, row_span(inputs, k, scratch));
        if (k < wo)
            continue;
        const RVector f = readout(rho);
        if (out.size() == 0)
            out.resize(inputs.rows() - wo, f.size());
        out.row(k - wo) = f.transpose();
    }
    return out;
}

FeatureMatrix run_rewinding(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout) {
    const int wo = reservoir.config().n_washout;
    if (inputs.rows() < wo)
        throw InvariantError("run_rewinding: input length is shorter than the washout");
    FeatureMatrix out;
    const DensityMatrix start = reservoir.initial_state();
    const Eigen::Index rows = inputs.rows() - wo;
    std::vector<double> scratch;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index k = r + wo;
        DensityMatrix rho = start;
        for (Eigen::Index j = k - wo; j <= k; ++j)
            rho = reservoir.step(rho, row_span(inputs, j, scratch));
        const RVector f = readout(rho);
        if (out.size() == 0)
            out.resize(rows, f.size());
        out.row(r) = f.transpose();
    }
    return out;
}

FeatureMatrix run_protocol(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout) {
    if (reservoir.config().protocol == Protocol::rewinding)
        return run_rewinding(inputs, reservoir, readout);
    return run_single_pass(inputs, reservoir.initial_state(), reservoir, readout);
}

WashoutEstimate estimate_washout(const InputSeries& inputs, const Reservoir& reservoir, const ReadoutFn& readout,
                                 double tolerance, std::uint64_t seed, int start, int limit) {
    std::mt19937_64 rng(seed);
    DensityMatrix a = random_density_matrix(reservoir.system().n_spins, rng);
    DensityMatrix b = random_density_matrix(reservoir.system().n_spins, rng);
    WashoutEstimate est;
    std::vector<double> scratch;
    int done = 0;
    for (int target = std::max(1, start); target <= limit; target *= 2) {
        if (target > inputs.rows())
            break;
        for (; done < target; ++done) {
            const auto in = row_span(inputs, done, scratch);
            a = reservoir.step(a, in);
            b = reservoir.step(b, in);
        }
        est.n_washout = target;
        est.max_difference = (readout(a) - readout(b)).cwiseAbs().maxCoeff();
        if (est.max_difference < tolerance) {
            est.converged = true;
            return est;
        }
    }
    return est;
}

std::size_t protocol_cost(Protocol protocol, std::size_t length, int n_washout) {
    const auto wo = static_cast<std::size_t>(std::max(0, n_washout));
    if (length < wo)
        return 0;
    if (protocol == Protocol::single_pass)
        return length;
    return (length - wo) * (wo + 1);
}

} // namespace qrc
