#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dispar/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"disparity decomposition engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    bool debug_dumps = false;
    std::optional<std::size_t> sim_n;

    CLI::App* run = app.add_subcommand("run", "execute an analysis config");
    run->add_option("--config", config_path, "analysis config (JSON)")->required();
    run->add_option("--out", out, "output directory (overrides config)");
    run->add_option("--seed", [&seed](const auto& vals) {
           seed = std::stoull(vals[0]);
           return true;
       },
       "seed override");
    run->add_option("--workers", [&workers](const auto& vals) {
           workers = static_cast<unsigned>(std::stoul(vals[0]));
           return true;
       },
       "worker thread count");
    run->add_flag("--debug-dumps", debug_dumps, "write per-run simulated datasets");

    CLI::App* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("--config", config_path, "analysis config (JSON)")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "sample a synthetic dataset with truths");
    simulate->add_option("--config", config_path, "generator config (JSON)")->required();
    simulate->add_option("--n", [&sim_n](const auto& vals) {
                sim_n = std::stoull(vals[0]);
                return true;
            },
            "rows to sample (overrides config)");
    simulate->add_option("--seed", [&seed](const auto& vals) {
                seed = std::stoull(vals[0]);
                return true;
            },
            "sampling seed (overrides config)");
    simulate->add_option("--out", out, "output data file")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        dispar::CliOverrides ov;
        if (!out.empty()) ov.out_dir = out;
        ov.seed = seed;
        ov.workers = workers;
        ov.debug_dumps = debug_dumps;
        return dispar::cmd_run(config_path, ov, std::cout);
    }
    if (validate->parsed()) return dispar::cmd_validate(config_path, std::cout);
    return dispar::cmd_simulate(config_path, sim_n, seed, out, std::cout);
}
