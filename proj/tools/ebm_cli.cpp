#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ebm/harness/config.hpp"
#include "ebm/harness/experiments.hpp"
#include "ebm/harness/output.hpp"

namespace {

enum Exit : int { kPass = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    bool quiet = false;
};

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ebm::ParseError("--config", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(ebm::harness::ExperimentKind kind, const Options& opt)
{
    using namespace ebm::harness;
    RunConfig rc;
    try {
        const std::string text = opt.config.empty() ? std::string("{}") : read_file(opt.config);
        rc = parse_config(text, kind, opt.seed);
    } catch (const ebm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    if (opt.out)
        rc.output_dir = *opt.out;
    if (opt.threads) {
        if (*opt.threads < 1) {
            std::cerr << "config error: --threads must be >= 1\n";
            return kConfigError;
        }
        rc.threads = *opt.threads;
    }

    try {
        const RunResult result = run_experiment(rc);
        const auto files = emit_outputs(result, rc.output_dir);
        const auto& s = result.summary;
        for (const auto& w : s.warnings)
            std::cerr << "warning: " << w << "\n";
        if (!opt.quiet) {
            std::cout << to_string(s.kind) << " seed=" << s.seed << " config_hash=" << s.config_hash << "\n";
            for (const auto& c : s.checks)
                std::cout << "  " << (c.passed ? "PASS " : "FAIL ") << c.name << " = " << format_double(c.value)
                          << "\n";
            std::cout << "wrote";
            for (const auto& f : files)
                std::cout << " " << (std::filesystem::path(rc.output_dir) / f).string();
            std::cout << "\n";
        }
        return s.passed() ? kPass : kCheckFailed;
    } catch (const ebm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

} // namespace

int main(int argc, char** argv)
{
    using ebm::harness::ExperimentKind;
    CLI::App app{"Stochastic energy-balance model: simulations and verification experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ebm::harness::kVersion);

    Options opt;
    std::optional<ExperimentKind> chosen;
    const std::pair<ExperimentKind, const char*> help[] = {
        {ExperimentKind::Simulate, "integrate one path and export trajectory and diagnostics"},
        {ExperimentKind::Isometry, "Monte Carlo check of the truncated Wiener isometry"},
        {ExperimentKind::Convolution, "Monte Carlo check of the stochastic convolution trace"},
        {ExperimentKind::Compare, "comparison estimate and pathwise order preservation"},
        {ExperimentKind::ConvergeEps, "shared-path ladder eps -> 0 against the deterministic run"},
        {ExperimentKind::ConvergeLambda, "Yosida ladder lambda -> 0 for the Budyko co-albedo"},
        {ExperimentKind::Stationary, "equilibria, minimal/maximal solutions and thresholds at one Q"},
        {ExperimentKind::ScanQ, "equilibrium count and energy over a grid of Q"},
        {ExperimentKind::Longtime, "distance to equilibria under decaying noise"},
        {ExperimentKind::ResolutionStudy, "time-step and mode-count refinement"},
    };
    for (const auto& [kind, text] : help) {
        CLI::App* sub = app.add_subcommand(ebm::harness::to_string(kind), text);
        sub->add_option("--config", opt.config, "JSON run configuration");
        sub->add_option("--seed", opt.seed, "seed (overrides the config)");
        sub->add_option("--out", opt.out, "output directory (overrides the config)");
        sub->add_option("--threads", opt.threads, "worker threads for Monte Carlo loops");
        sub->add_flag("--quiet", opt.quiet, "print nothing on success");
        sub->callback([&chosen, k = kind] { chosen = k; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }
    return run(*chosen, opt);
}
