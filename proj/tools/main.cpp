#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "cli.hpp"
#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"

using namespace mesorisk;
using namespace mesorisk::cli;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mesoscopic credit risk: spectra, communities, factor models and default simulation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "Flat key=value configuration file (command-line flags take precedence)");

    RunConfig cfg;
    std::string panel, meta, hierarchy, calibration_dir;
    std::vector<std::string> portfolios, variants;
    std::string out_dir = cfg.out_dir.string();

    app.add_option("--panel", panel, "Spread panel CSV (date,issuer_id,spread_bps)");
    app.add_option("--meta", meta, "Issuer metadata CSV (issuer_id,region,sector[,rating])");
    app.add_option("--hierarchy", hierarchy, "hierarchy.json from detect, used for community factors");
    app.add_option("--calibration-dir", calibration_dir, "Directory holding calibration_*.json (default: out-dir)");
    app.add_option("--portfolio", portfolios, "Portfolio CSV (repeatable; default: schematic portfolios A-D)");
    app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Top-level seed")->capture_default_str();
    app.add_option("--resolution", cfg.resolution, "Return resolution for spectrum/detect/windows: 1d 2d 1w 2w 1m")
        ->capture_default_str();
    app.add_option("--calibration-resolution", cfg.calibration_resolution, "Return resolution for calibrate")
        ->capture_default_str();
    app.add_option("--resolutions", cfg.resolutions, "Resolutions for the multiresolution study")->delimiter(',');
    app.add_option("--mode", cfg.mode, "Stability mode: multiresolution or sliding")->capture_default_str();
    app.add_option("--window", cfg.window, "Sliding window length in returns")->capture_default_str();
    app.add_option("--restarts", cfg.restarts, "Louvain restarts")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--variant", variants, "Model variant M1..M6 (repeatable; default all)")->delimiter(',');
    app.add_option("--paths", cfg.paths, "Monte Carlo paths")->capture_default_str();
    app.add_option("--alphas", cfg.alphas, "Quantile levels")->delimiter(',');
    app.add_option("--threads", cfg.threads, "Simulation threads (0: all cores); outputs do not depend on it")
        ->capture_default_str();
    app.add_option("--include-below-bulk", cfg.include_below_bulk, "Keep below-bulk eigenvalues in the group component")
        ->capture_default_str();
    app.add_flag("--biased-baseline", cfg.biased_baseline, "Use the weighted-network null model (comparison only)");
    app.add_option("--max-depth", cfg.max_depth, "Hierarchy depth")->capture_default_str();
    app.add_option("--min-size", cfg.min_size, "Smallest community that is subdivided")->capture_default_str();
    app.add_option("--max-missing", cfg.max_missing, "Drop issuers missing more than this fraction")
        ->capture_default_str();
    app.add_option("--max-gap", cfg.max_gap, "Longest forward-filled gap")->capture_default_str();
    app.add_option("--kind", cfg.kind, "synth: noise, two-block, planted, model, one-factor, universe, binomial")
        ->capture_default_str();
    app.add_option("--n-obs", cfg.n_obs, "synth: number of daily returns (0: kind default)");
    app.add_option("--beta", cfg.beta, "synth: systematic share")->capture_default_str();

    struct Command {
        const char* name;
        const char* help;
        void (*run)(Context&);
    };
    const Command commands[] = {
        {"spectrum", "Eigenvalue spectrum, Marchenko-Pastur bounds and shuffle test", cmd_spectrum},
        {"detect", "Community detection and hierarchy on the filtered correlation matrix", cmd_detect},
        {"stability", "Multiresolution or sliding-window partition stability", cmd_stability},
        {"calibrate", "Factor construction and calibration of model variants", cmd_calibrate},
        {"simulate", "Monte Carlo default losses and VaR quantiles", cmd_simulate},
        {"pipeline", "All stages in sequence", cmd_pipeline},
        {"synth", "Write synthetic demo and test data", cmd_synth},
    };
    for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (!panel.empty()) cfg.panel = panel;
        if (!meta.empty()) cfg.meta = meta;
        if (!hierarchy.empty()) cfg.hierarchy = hierarchy;
        if (!calibration_dir.empty()) cfg.calibration_dir = calibration_dir;
        for (const auto& p : portfolios) cfg.portfolios.emplace_back(p);
        for (const auto& v : variants) cfg.variants.push_back(parse_variant(v));
        cfg.out_dir = out_dir;
        if (cfg.threads == 0) cfg.threads = std::max(1u, std::thread::hardware_concurrency());

        Context ctx{cfg, OutputDir(cfg.out_dir), {}};
        // Warnings go to stderr and into every manifest written afterwards.
        set_warning_handler([&](const std::string& msg) {
            std::cerr << "warning: " << msg << "\n";
            ctx.warnings.push_back(msg);
        });
        for (const auto& c : commands)
            if (app.got_subcommand(c.name)) c.run(ctx);
        return EXIT_SUCCESS;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
