// kinflow — configure and run landscape-flow experiments from the command line.
#include "kinflow/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"kinflow: gradient-flow convergence experiments on the unitary group"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "run a scenario from a JSON config");
    run_cmd->add_option("config", config_path, "path to config.json")->required();

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "parse and validate a JSON config");
    validate_cmd->add_option("config", validate_path, "path to config.json")->required();

    std::string replay_scenario;
    int replay_n = 0;
    std::uint64_t replay_seed = 0;
    std::string replay_config;
    auto* replay_cmd =
        app.add_subcommand("replay", "re-run a single instance from (scenario, N, seed)");
    replay_cmd->add_option("scenario", replay_scenario, "scenario name")->required();
    replay_cmd->add_option("N", replay_n, "dimension")->required();
    replay_cmd->add_option("seed", replay_seed, "instance seed")->required();
    replay_cmd->add_option("--config", replay_config,
                           "optional config supplying non-seed parameters");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const auto config = kinflow::parse_config_file(config_path);
            const auto result = kinflow::run_experiment(config, std::cout);
            return result.exit_code;
        }
        if (validate_cmd->parsed()) {
            kinflow::parse_config_file(validate_path);
            std::cout << "config ok\n";
            return 0;
        }
        if (replay_cmd->parsed()) {
            kinflow::ExperimentConfig config;
            if (!replay_config.empty()) config = kinflow::parse_config_file(replay_config);
            const auto scenario = kinflow::scenario_from_string(replay_scenario);
            config.scenario = scenario;
            if (replay_n < 2 || replay_n > 512) {
                std::cerr << "replay: N must be in [2, 512]\n";
                return 2;
            }
            return kinflow::replay_instance(scenario, replay_n, replay_seed, config, std::cout);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
