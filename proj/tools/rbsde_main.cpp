#include <CLI11.hpp>
#include <iostream>

#include "rbsde/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"reflected backward SDE experiments on non-convex star-shaped domains"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int threads = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment configuration (json)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides,
                        "override a config entry, e.g. --set lattice.N=100");
        cmd->add_option("--out", out_dir, "output directory (default: config value or "
                                          "RBSDE_OUTPUT_DIR)");
        cmd->add_option("--threads", threads, "worker thread cap for node sweeps");
    };

    CLI::App* run = app.add_subcommand("run", "run a configured experiment end to end");
    add_common(run);
    CLI::App* geometry =
        app.add_subcommand("geometry", "geometry report only (gamma, r0, smallness)");
    add_common(geometry);
    CLI::App* oracle =
        app.add_subcommand("oracle", "closed-form circle construction only");
    add_common(oracle);
    CLI::App* list = app.add_subcommand("list", "list catalog entries and their schemas");

    CLI11_PARSE(app, argc, argv);

    if (list->parsed()) {
        std::cout << rbsde::catalog_listing();
        return rbsde::kExitOk;
    }
    if (oracle->parsed()) overrides.push_back("experiment=oracle");
    const bool geom_only = geometry->parsed();
    return rbsde::run_config(config_path, overrides, std::cout, out_dir, threads,
                             geom_only);
}
