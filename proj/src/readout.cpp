#include "qrc/readout.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>

namespace qrc {

namespace {

/// z = sum over rows with the spin bit clear of rho(n, n | b); <sx> = 2 Re z, <sy> = -2 Im z.
Complex lower_coherence(const CMatrix& rho, std::size_t mask) {
    Complex z = 0.0;
    for (Eigen::Index n = 0; n < rho.rows(); ++n)
        if ((static_cast<std::size_t>(n) & mask) == 0)
            z += rho(n, static_cast<Eigen::Index>(static_cast<std::size_t>(n) | mask));
    return z;
}

double z_expectation(const CMatrix& rho, std::size_t mask) {
    double s = 0.0;
    for (Eigen::Index n = 0; n < rho.rows(); ++n)
        s += (static_cast<std::size_t>(n) & mask) ? -rho(n, n).real() : rho(n, n).real();
    return s;
}

std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

Eigen::Index first_frequency_index(std::size_t n) { return -static_cast<Eigen::Index>(n / 2); }

} // namespace

RVector pauli_expectations(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel) {
    if (rho.n_spins() != system.n_spins)
        throw DimensionError("pauli_expectations: state and system disagree on the spin count");
    const auto groups = system.readout_groups(channel);
    RVector out(1 + 3 * groups.size());
    out[0] = 1.0;
    const CMatrix& m = rho.matrix();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        double sx = 0.0, sy = 0.0, sz = 0.0;
        for (int spin : groups[g].spins) {
            const auto mask = spin_mask(spin, system.n_spins);
            const Complex z = lower_coherence(m, mask);
            sx += 2.0 * z.real();
            sy += -2.0 * z.imag();
            sz += z_expectation(m, mask);
        }
        out[1 + 3 * g] = sx;
        out[2 + 3 * g] = sy;
        out[3 + 3 * g] = sz;
    }
    return out;
}

RVector full_pauli_expectations(const DensityMatrix& rho, double scale) {
    if (!(scale > 0.0))
        throw InvariantError("full_pauli_expectations: scale must be positive");
    const int n = rho.n_spins();
    const std::size_t count = std::size_t{1} << (2 * n);
    const CMatrix& m = rho.matrix();
    const auto d = static_cast<std::size_t>(rho.dim());
    RVector out(count);
    out[0] = 1.0;
    for (std::size_t s = 1; s < count; ++s) {
        std::size_t flip = 0, ymask = 0, zmask = 0;
        int n_y = 0;
        for (int spin = 0; spin < n; ++spin) {
            const int digit = static_cast<int>((s >> (2 * (n - 1 - spin))) & 3U);
            const auto b = spin_mask(spin, n);
            if (digit == 1 || digit == 2)
                flip |= b;
            if (digit == 2) {
                ymask |= b;
                ++n_y;
            }
            if (digit == 3)
                zmask |= b;
        }
        // P|k> = i^{n_y} (-1)^{popcount(k & (ymask | zmask))} |k xor flip>
        Complex acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double sign = (std::popcount(k & (ymask | zmask)) & 1) ? -1.0 : 1.0;
            acc += sign * m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k ^ flip));
        }
        static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        out[s] = (ipow[n_y & 3] * acc).real() / scale;
    }
    return out;
}

namespace reference {

double pauli_string_expectation(const DensityMatrix& rho, const std::vector<int>& digits) {
    if (static_cast<int>(digits.size()) != rho.n_spins())
        throw DimensionError("pauli_string_expectation: one digit per spin required");
    const Complex i(0.0, 1.0);
    Eigen::Matrix2cd paulis[4];
    paulis[0] << 1, 0, 0, 1;
    paulis[1] << 0, 1, 1, 0;
    paulis[2] << 0, -i, i, 0;
    paulis[3] << 1, 0, 0, -1;
    CMatrix p = CMatrix::Identity(1, 1);
    for (int dgt : digits) {
        CMatrix next(p.rows() * 2, p.cols() * 2);
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            for (Eigen::Index c = 0; c < p.cols(); ++c)
                next.block(2 * r, 2 * c, 2, 2) = p(r, c) * paulis[dgt];
        p = std::move(next);
    }
    return (rho.matrix() * p).trace().real();
}

} // namespace reference

std::vector<Transition> fid_transitions(const SpinSystem& system, const std::string& channel) {
    const auto h = build_hamiltonian(system);
    std::vector<Transition> out;
    for (int spin : system.channel(channel)) {
        const auto mask = spin_mask(spin, system.n_spins);
        const double t2 = system.t2_s[spin];
        const double decay = std::isfinite(t2) ? 1.0 / t2 : 0.0;
        for (std::size_t a = 0; a < system.dim(); ++a) {
            if (a & mask)
                continue;
            const std::size_t b = a | mask;
            out.push_back({spin, static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b),
                           h.energies[a] - h.energies[b], decay});
        }
    }
    return out;
}

LocalUnitary readout_pulse(const SpinSystem& system, const std::string& channel) {
    LocalUnitary u(system.n_spins);
    const auto gate = rotation_gate(0.5 * M_PI);
    for (int spin : system.channel(channel))
        u.set(spin, gate);
    return u;
}

namespace {

FidSignal fid_from_pulsed(const CMatrix& pulsed, const SpinSystem& system, const std::string& channel,
                          std::size_t n_points, double dt) {
    if (!(dt > 0.0) || n_points == 0)
        throw InvariantError("simulate_fid: need a positive dt and at least one point");
    FidSignal fid;
    fid.dt = dt;
    fid.channel = channel;
    fid.samples.assign(n_points, Complex(0.0, 0.0));
    for (const auto& t : fid_transitions(system, channel)) {
        const Complex amp = pulsed(t.row, t.col);
        if (amp == Complex(0.0, 0.0))
            continue;
        const Complex rate(-t.decay, -t.omega);
        for (std::size_t j = 0; j < n_points; ++j)
            fid.samples[j] += amp * std::exp(rate * (dt * static_cast<double>(j)));
    }
    return fid;
}

} // namespace

FidSignal simulate_fid(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                       const LocalUnitary& pre_pulse, std::size_t n_points, double dt) {
    CMatrix pulsed = rho.matrix();
    pre_pulse.apply(pulsed);
    return fid_from_pulsed(pulsed, system, channel, n_points, dt);
}

FidSignal simulate_fid(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                       const CMatrix& pre_pulse, std::size_t n_points, double dt) {
    const CMatrix pulsed = pre_pulse * rho.matrix() * pre_pulse.adjoint();
    return fid_from_pulsed(pulsed, system, channel, n_points, dt);
}

namespace reference {

FidSignal simulate_fid_brute_force(const DensityMatrix& rho, const SpinSystem& system, const std::string& channel,
                                   const CMatrix& pre_pulse, std::size_t n_points, double dt,
                                   const StepControl& ctl) {
    const SpinSystem dephasing = with_relaxation(system, RelaxationModel::dephasing_only);
    const LindbladModel model(dephasing);
    DensityMatrix state(CMatrix(pre_pulse * rho.matrix() * pre_pulse.adjoint()));
    const auto& spins = system.channel(channel);
    FidSignal fid;
    fid.dt = dt;
    fid.channel = channel;
    fid.samples.reserve(n_points);
    for (std::size_t j = 0; j < n_points; ++j) {
        if (j > 0)
            state = evolve(state, model, dt, ctl);
        Complex s = 0.0;
        for (int spin : spins) {
            // Tr(rho |1><0|) = <0|rho|1> on that spin, via the dense operator
            Eigen::Matrix2cd op = Eigen::Matrix2cd::Zero();
            op(1, 0) = 1.0;
            s += (state.matrix() * embed_single_spin(op, spin, system.n_spins)).trace();
        }
        fid.samples.push_back(s);
    }
    return fid;
}

} // namespace reference

Spectrum fid_to_spectrum(const FidSignal& fid) {
    const std::size_t n = fid.samples.size();
    if (n == 0 || !(fid.dt > 0.0))
        throw InvariantError("fid_to_spectrum: empty signal or non-positive dt");
    std::vector<Complex> in(fid.samples);
    std::vector<Complex> out(n);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_plan_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
    Spectrum s;
    s.spacing_hz = 1.0 / (static_cast<double>(n) * fid.dt);
    s.freq_hz.resize(n);
    s.values.resize(n);
    const Eigen::Index j0 = first_frequency_index(n);
    for (std::size_t p = 0; p < n; ++p) {
        const Eigen::Index j = j0 + static_cast<Eigen::Index>(p);
        const auto src = static_cast<std::size_t>((j + static_cast<Eigen::Index>(n)) % static_cast<Eigen::Index>(n));
        s.freq_hz[p] = static_cast<double>(j) * s.spacing_hz;
        s.values[p] = fid.dt * out[src];
    }
    return s;
}

namespace reference {

Spectrum dft_spectrum(const FidSignal& fid) {
    const std::size_t n = fid.samples.size();
    Spectrum s;
    s.spacing_hz = 1.0 / (static_cast<double>(n) * fid.dt);
    const Eigen::Index j0 = first_frequency_index(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto j = static_cast<double>(j0 + static_cast<Eigen::Index>(p));
        Complex acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double phase = 2.0 * M_PI * std::fmod(j * static_cast<double>(k), static_cast<double>(n)) /
                                 static_cast<double>(n);
            acc += fid.samples[k] * std::polar(1.0, phase);
        }
        s.freq_hz.push_back(j * s.spacing_hz);
        s.values.push_back(fid.dt * acc);
    }
    return s;
}

} // namespace reference

std::vector<FrequencyRegion> merge_regions(std::vector<FrequencyRegion> regions) {
    for (const auto& r : regions)
        if (!(r.lo_hz <= r.hi_hz))
            throw InvariantError("frequency region has lo > hi");
    std::sort(regions.begin(), regions.end(),
              [](const FrequencyRegion& a, const FrequencyRegion& b) { return a.lo_hz < b.lo_hz; });
    std::vector<FrequencyRegion> out;
    for (const auto& r : regions) {
        if (!out.empty() && r.lo_hz <= out.back().hi_hz)
            out.back().hi_hz = std::max(out.back().hi_hz, r.hi_hz);
        else
            out.push_back(r);
    }
    return out;
}

std::vector<FrequencyRegion> default_regions(const SpinSystem& system, const std::string& channel,
                                             double half_width_hz) {
    std::vector<FrequencyRegion> regions;
    for (const auto& t : fid_transitions(system, channel)) {
        const double f = t.omega / (2.0 * M_PI);
        regions.push_back({f - half_width_hz, f + half_width_hz});
    }
    return merge_regions(std::move(regions));
}

std::vector<std::size_t> region_bins(const Spectrum& spectrum, const std::vector<FrequencyRegion>& regions) {
    const auto merged = merge_regions(regions);
    std::vector<std::size_t> bins;
    for (std::size_t p = 0; p < spectrum.freq_hz.size(); ++p) {
        const double f = spectrum.freq_hz[p];
        for (const auto& r : merged)
            if (f >= r.lo_hz && f <= r.hi_hz) {
                bins.push_back(p);
                break;
            }
    }
    return bins;
}

RVector extract_features(const Spectrum& spectrum, const std::vector<FrequencyRegion>& regions) {
    if (regions.empty())
        throw InvariantError("extract_features: no frequency regions given");
    const auto bins = region_bins(spectrum, regions);
    RVector out(1 + 2 * bins.size());
    out[0] = 1.0;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        out[1 + 2 * b] = spectrum.values[bins[b]].real();
        out[2 + 2 * b] = spectrum.values[bins[b]].imag();
    }
    return out;
}

void add_measurement_noise_inplace(RVector& features, double sigma, std::mt19937_64& rng) {
    if (sigma < 0.0)
        throw InvariantError("measurement noise sigma must be non-negative");
    if (sigma == 0.0)
        return;
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index i = 1; i < features.size(); ++i)
        features[i] += noise(rng);
}

RVector add_measurement_noise(const RVector& features, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RVector out = features;
    add_measurement_noise_inplace(out, sigma, rng);
    return out;
}

SpectralReadout::SpectralReadout(const SpinSystem& system, const std::string& channel, const FidSettings& settings)
    : SpectralReadout(system, channel, settings, default_regions(system, channel, settings.half_width_hz)) {}

SpectralReadout::SpectralReadout(const SpinSystem& system, const std::string& channel, const FidSettings& settings,
                                 std::vector<FrequencyRegion> regions)
    : settings_(settings), channel_(channel), pulse_(readout_pulse(system, channel)),
      regions_(merge_regions(std::move(regions))) {
    build(system);
}

void SpectralReadout::build(const SpinSystem& system) {
    const std::size_t n = settings_.n_points;
    const double dt = settings_.dt;
    if (n == 0 || !(dt > 0.0))
        throw InvariantError("SpectralReadout: need n_points > 0 and dt > 0");
    transitions_ = fid_transitions(system, channel_);
    const double spacing = 1.0 / (static_cast<double>(n) * dt);
    const Eigen::Index j0 = first_frequency_index(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double f = static_cast<double>(j0 + static_cast<Eigen::Index>(p)) * spacing;
        for (const auto& r : regions_)
            if (f >= r.lo_hz && f <= r.hi_hz) {
                bins_.push_back(p);
                break;
            }
    }
    kernel_.resize(static_cast<Eigen::Index>(bins_.size()), static_cast<Eigen::Index>(transitions_.size()));
    const auto nd = static_cast<double>(n);
    for (std::size_t b = 0; b < bins_.size(); ++b) {
        const double j = static_cast<double>(j0 + static_cast<Eigen::Index>(bins_[b]));
        for (std::size_t q = 0; q < transitions_.size(); ++q) {
            const auto& t = transitions_[q];
            // dt * sum_k z^k with z = exp((-lambda - i Omega) dt + 2 pi i j / n)
            const double arg = -t.omega * dt + 2.0 * M_PI * j / nd;
            const Complex log_z(-t.decay * dt, arg);
            const Complex z = std::exp(log_z);
            const Complex zn = std::exp(Complex(-t.decay * dt * nd, -t.omega * dt * nd));
            Complex sum;
            if (std::abs(1.0 - z) < 1e-12)
                sum = nd;
            else
                sum = (1.0 - zn) / (1.0 - z);
            kernel_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(q)) = dt * sum;
        }
    }
}

RVector SpectralReadout::operator()(const DensityMatrix& rho) const {
    CMatrix pulsed = rho.matrix();
    pulse_.apply(pulsed);
    CVector amps(static_cast<Eigen::Index>(transitions_.size()));
    for (std::size_t q = 0; q < transitions_.size(); ++q)
        amps[static_cast<Eigen::Index>(q)] = pulsed(transitions_[q].row, transitions_[q].col);
    const CVector x = kernel_ * amps;
    RVector out(1 + 2 * x.size());
    out[0] = 1.0;
    for (Eigen::Index b = 0; b < x.size(); ++b) {
        out[1 + 2 * b] = x[b].real();
        out[2 + 2 * b] = x[b].imag();
    }
    return out;
}

namespace {

void write_complex_csv(const std::string& path, const std::vector<double>& axis, const std::vector<Complex>& values) {
    std::ofstream f(path);
    if (!f)
        throw Error("cannot open '" + path + "' for writing");
    f << "index,freq_or_time,real,imag\n" << std::setprecision(17);
    for (std::size_t i = 0; i < values.size(); ++i)
        f << i << ',' << axis[i] << ',' << values[i].real() << ',' << values[i].imag() << '\n';
}

} // namespace

void write_fid_csv(const std::string& path, const FidSignal& fid) {
    std::vector<double> t(fid.samples.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = fid.dt * static_cast<double>(i);
    write_complex_csv(path, t, fid.samples);
}

void write_spectrum_csv(const std::string& path, const Spectrum& spectrum) {
    write_complex_csv(path, spectrum.freq_hz, spectrum.values);
}

} // namespace qrc
