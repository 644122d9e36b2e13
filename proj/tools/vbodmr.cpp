#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vbodmr/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"vbodmr: ODMR spectra of boron-vacancy ensembles in hBN"};
    app.require_subcommand(1, 1);

    std::string config, out;
    std::uint64_t seed = 0;
    bool quiet = false;
    app.add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (overrides output_dir)");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config seed)");
    app.add_flag("--quiet", quiet, "suppress progress messages");
    app.fallthrough();

    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "write a model ODMR spectrum (optionally with noise)"},
        {"fit", "fit a measured spectrum with the physical or free-Lorentzian model"},
        {"sensitivity", "spectral slope and relative field sensitivity"},
        {"polarization", "nuclear polarization from line areas"},
        {"raman", "Raman shift from isotope fractions"},
        {"validate", "run the built-in self-check suite"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : vbodmr::cli::kValidation;
    }

    vbodmr::cli::GlobalOptions g;
    if (!config.empty()) g.config_path = config;
    if (!out.empty()) g.out_dir = out;
    if (*seed_opt) g.seed = seed;
    g.quiet = quiet;
    return vbodmr::cli::run(app.get_subcommands().front()->get_name(), g, std::cerr);
}
