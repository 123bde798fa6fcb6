#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "rdw/errors.hpp"
#include "rdw/experiments.hpp"

// Exit codes: 0 pass, 1 invariant failure, 2 configuration error, 3 runtime error.
int main(int argc, char** argv) {
    CLI::App app{"rdw - random double-well energy laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string kind;
    std::string manifest_path;
    long long seed_override = -1;
    int workers_override = 0;

    CLI::App* validate = app.add_subcommand("validate", "parse and cross-check a config file");
    validate->add_option("--config", config_path, "config file")->required();

    CLI::App* runcmd = app.add_subcommand("run", "execute an experiment kind");
    runcmd->add_option("--config", config_path, "config file")->required();
    runcmd->add_option("--kind", kind, "override experiment.kind");
    runcmd->add_option("--seed", seed_override, "override experiment.master_seed");
    runcmd->add_option("--workers", workers_override, "override output.workers");

    CLI::App* plots = app.add_subcommand("plots", "emit plot scripts for a finished run");
    plots->add_option("--manifest", manifest_path, "manifest.json of a run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            rdw::ExperimentConfig cfg = rdw::validate_config(config_path);
            std::cout << "config ok: kind=" << cfg.kind << " dim=" << cfg.dim
                      << " cells=" << cfg.thetas.size() * cfg.ns.size() << "\n";
            return 0;
        }
        if (runcmd->parsed()) {
            rdw::ExperimentConfig cfg = rdw::validate_config(config_path);
            if (!kind.empty()) cfg.kind = kind;
            if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
            if (workers_override > 0) cfg.workers = workers_override;
            if (const char* dir = std::getenv("RDW_OUTPUT_DIR")) cfg.output_dir = dir;
            cfg.validate();

            const rdw::RunManifest man = rdw::run(cfg);
            for (const rdw::Verdict& v : man.verdicts)
                std::cout << (v.advisory ? (v.pass ? "[ADV+] " : "[ADV-] ")
                                         : (v.pass ? "[PASS] " : "[FAIL] "))
                          << v.name << '\n';
            std::cout << "manifest: " << man.manifest_path << '\n';
            return man.all_pass ? 0 : 1;
        }
        if (plots->parsed()) {
            for (const std::string& p : rdw::emit_plots(manifest_path))
                std::cout << "wrote " << p << '\n';
            return 0;
        }
    } catch (const rdw::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
