// experiments.hpp — experiment configuration, scenario execution, and
// machine-readable result emission for the command-line front end.
#pragma once

#include "kinflow/complexity.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kinflow {

inline constexpr const char* kVersion = "0.1.0";

// records.csv column order; fields that do not apply to a scenario print nan.
inline constexpr const char* kCsvHeader =
    "scenario,N,seed,t_measured,bound_eps,bound_region,bound_total,converged,"
    "path_length,path_bound,invariant_max_residual";

enum class Scenario {
    analytic_check,
    converge_observable,
    converge_gate,
    scaling_study,
    path_length_study,
    dyncontrol_demo,
};

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct ExperimentConfig {
    Scenario scenario = Scenario::analytic_check;
    std::vector<int> dims = {2, 4, 8};
    int instances_per_dim = 10;
    std::uint64_t seed = 1;
    double epsilon_p = 0.01;
    bool require_region = true;
    double s_max = 10.0;              // horizon for analytic_check flows
    double max_step = 0.01;
    std::string ensemble = "uniform_spread";  // observable studies
    double cluster_width = 0.25;
    double theta0_margin = 0.1;
    bool force_eigenphase_pi = false;
    int threads = 1;                  // overridden by KINFLOW_THREADS when set
    std::string output_dir = "out";
};

// Throws std::invalid_argument with a "config.<field>: reason" message.
ExperimentConfig parse_config_file(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& json_text);
void validate(const ExperimentConfig& config);

struct ExperimentResult {
    int exit_code = 0;  // 0 clean; 1 invariant failure or bound violation
    int bound_violations = 0;
    int invariant_failures = 0;
    int non_convergent = 0;
    std::uint64_t first_failing_seed = 0;
    std::string summary_json;
};

// Runs one scenario; writes manifest.json, records.csv, summary.json under
// config.output_dir. Identical configs produce identical bytes.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

// Re-runs a single instance from its (scenario, N, seed) triple and prints the
// record; params not pinned by the triple take the scenario defaults (or the
// supplied config).
int replay_instance(Scenario scenario, int n, std::uint64_t seed,
                    const ExperimentConfig& config, std::ostream& out);

// 17 significant digits, the bit-faithful replay format.
std::string format_double(double v);
std::string record_to_csv(const char* scenario, const InstanceRecord& rec);

}  // namespace kinflow
