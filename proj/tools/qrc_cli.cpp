// qrc: run or validate reservoir experiments, export FIDs.

#include "qrc/harness.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

int cmd_run(const std::string& path, const qrc::RunOptions& opts) {
    const auto config = qrc::load_experiment(path);
    const auto summary = qrc::run_experiment(config, opts);
    std::cout << summary.cells << " cells, " << summary.failed << " failed -> " << summary.output_dir << "\n";
    return summary.failed == 0 ? 0 : 1;
}

int cmd_validate(const std::string& path) {
    const auto rep = qrc::validate_experiment(path);
    for (const auto& issue : rep.issues)
        std::cout << "issue: " << issue << "\n";
    if (!rep.issues.empty())
        return 2;
    std::cout << rep.cells << " cells, about " << rep.evolve_calls << " evolve calls"
              << (rep.expensive ? " (expensive)" : "") << "\n";
    return 0;
}

int cmd_fid(const std::string& molecule, const std::string& channel, const std::string& out_prefix,
            const qrc::FidSettings& settings) {
    const auto system = qrc::load_molecule_file(molecule);
    const auto pulse = qrc::readout_pulse(system, channel);
    const auto rho = qrc::thermal_state(system);
    const auto fid = qrc::simulate_fid(rho, system, channel, pulse, settings.n_points, settings.dt);
    qrc::write_fid_csv(out_prefix + "_fid.csv", fid);
    qrc::write_spectrum_csv(out_prefix + "_spectrum.csv", qrc::fid_to_spectrum(fid));
    std::cout << "wrote " << out_prefix << "_fid.csv and " << out_prefix << "_spectrum.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reservoir computing experiments on NMR spin systems"};
    app.require_subcommand(1);

    std::string config_path;
    qrc::RunOptions opts;
    std::uint64_t seed_override = 0;
    auto* run = app.add_subcommand("run", "execute every cell of a config");
    run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--only", opts.only, "run a single cell id");
    run->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed-override", seed_override, "replace the config seeds by one seed");
    run->add_option("--output-root", opts.output_root, "output root (default: $QRC_OUTPUT_ROOT or .)");

    auto* validate = app.add_subcommand("validate", "dry-run checks and cost estimate");
    validate->add_option("config", config_path, "experiment config (JSON)")->required();

    std::string molecule = "builtin:diethyl_fluoromalonate", channel = "proton", prefix = "fid";
    qrc::FidSettings fid_settings;
    auto* fid = app.add_subcommand("fid", "thermal-state FID and spectrum of a molecule");
    fid->add_option("--molecule", molecule, "molecule file or builtin:<name>");
    fid->add_option("--channel", channel, "readout channel");
    fid->add_option("--points", fid_settings.n_points, "number of samples");
    fid->add_option("--dt", fid_settings.dt, "sample spacing in seconds");
    fid->add_option("--out", prefix, "output file prefix");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) {
            if (*seed_opt)
                opts.seed_override = seed_override;
            return cmd_run(config_path, opts);
        }
        if (*validate)
            return cmd_validate(config_path);
        if (*fid)
            return cmd_fid(molecule, channel, prefix, fid_settings);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
