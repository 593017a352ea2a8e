// Parallel kernels against their serial references.
//   ./build/bench/qrc_bench --benchmark_filter=rhs

#include "qrc/readout.hpp"
#include "qrc/reservoir.hpp"

#include "json.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace qrc;

namespace {

SpinSystem random_system(int n) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(n));
    std::uniform_real_distribution<double> u(-200.0, 200.0), j(-50.0, 50.0);
    nlohmann::json s;
    s["n_spins"] = n;
    std::vector<double> nu, coupling, t1, t2, p;
    for (int i = 0; i < n; ++i) {
        nu.push_back(u(rng));
        t1.push_back(3.0);
        t2.push_back(0.2);
        p.push_back(1e-4 * (1 + i % 3));
        for (int k = i + 1; k < n; ++k)
            coupling.push_back(j(rng));
    }
    s["frequencies_hz"] = nu;
    s["couplings_hz"] = coupling;
    s["t1_s"] = t1;
    s["t2_s"] = t2;
    s["polarizations"] = p;
    return load_molecule(s.dump());
}

void rhs_parallel(benchmark::State& state) {
    const SpinSystem s = random_system(static_cast<int>(state.range(0)));
    const LindbladModel model(s);
    std::mt19937_64 rng(1);
    const auto rho = random_density_matrix(s.n_spins, rng);
    CMatrix out(rho.dim(), rho.dim());
    for (auto _ : state) {
        lindblad_rhs(model, rho.matrix(), out);
        benchmark::DoNotOptimize(out.data());
    }
}

void rhs_dense_reference(benchmark::State& state) {
    const SpinSystem s = random_system(static_cast<int>(state.range(0)));
    std::mt19937_64 rng(1);
    const auto rho = random_density_matrix(s.n_spins, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(reference::lindblad_rhs_dense(rho.matrix(), s));
}

void free_evolution(benchmark::State& state, EvolutionEngine engine) {
    const SpinSystem s = diethyl_fluoromalonate();
    ReservoirConfig c;
    c.tau = static_cast<double>(state.range(0)) * 1e-3;
    c.inputs = {{"proton", AngleMap::arcsin, 0.0}};
    c.engine = engine;
    const Reservoir r(s, c);
    auto rho = thermal_state(s);
    const double in = 0.37;
    for (auto _ : state) {
        rho = r.step(rho, {&in, 1});
        benchmark::DoNotOptimize(rho.matrix().data());
    }
}

void tm_readout_kernel(benchmark::State& state) {
    const SpinSystem s = diethyl_fluoromalonate();
    const SpectralReadout ro(s, "proton", FidSettings{});
    std::mt19937_64 rng(3);
    const auto rho = random_density_matrix(3, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(ro(rho));
}

void tm_readout_fft_pipeline(benchmark::State& state) {
    const SpinSystem s = diethyl_fluoromalonate();
    const FidSettings fs;
    const auto regions = default_regions(s, "proton", fs.half_width_hz);
    const auto pulse = readout_pulse(s, "proton");
    std::mt19937_64 rng(3);
    const auto rho = random_density_matrix(3, rng);
    for (auto _ : state) {
        const auto fid = simulate_fid(rho, s, "proton", pulse, fs.n_points, fs.dt);
        benchmark::DoNotOptimize(extract_features(fid_to_spectrum(fid), regions));
    }
}

} // namespace

BENCHMARK(rhs_parallel)->DenseRange(3, 8);
BENCHMARK(rhs_dense_reference)->DenseRange(3, 7);
BENCHMARK_CAPTURE(free_evolution, propagator, EvolutionEngine::propagator)->Arg(10)->Arg(300);
BENCHMARK_CAPTURE(free_evolution, rk4, EvolutionEngine::rk4)->Arg(10)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(tm_readout_kernel);
BENCHMARK(tm_readout_fft_pipeline)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
