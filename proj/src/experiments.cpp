#include "kinflow/experiments.hpp"

#include "kinflow/dyncontrol.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace kinflow {

using nlohmann::json;

const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::analytic_check: return "analytic_check";
        case Scenario::converge_observable: return "converge_observable";
        case Scenario::converge_gate: return "converge_gate";
        case Scenario::scaling_study: return "scaling_study";
        case Scenario::path_length_study: return "path_length_study";
        case Scenario::dyncontrol_demo: return "dyncontrol_demo";
    }
    return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
    for (Scenario s : {Scenario::analytic_check, Scenario::converge_observable,
                       Scenario::converge_gate, Scenario::scaling_study,
                       Scenario::path_length_study, Scenario::dyncontrol_demo}) {
        if (name == to_string(s)) return s;
    }
    throw std::invalid_argument("config.scenario: unknown scenario '" + name + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string record_to_csv(const char* scenario, const InstanceRecord& rec) {
    std::ostringstream os;
    os << scenario << ',' << rec.n << ',' << rec.seed << ',' << format_double(rec.t_measured)
       << ',' << format_double(rec.bound_eps) << ',' << format_double(rec.bound_region) << ','
       << format_double(rec.bound_total) << ',' << (rec.converged ? 1 : 0) << ','
       << format_double(rec.path_length) << ',' << format_double(rec.path_bound) << ','
       << format_double(rec.invariant_max_residual);
    return os.str();
}

// ------------------------------------------------------------- config I/O --

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
    throw std::invalid_argument("config." + field + ": " + why);
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    static const std::set<std::string> known = {
        "scenario",      "dims",          "instances_per_dim", "seed",
        "epsilon_p",     "require_region", "s_max",            "max_step",
        "ensemble",      "cluster_width", "theta0_margin",     "force_eigenphase_pi",
        "threads",       "output_dir"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) config_error(it.key(), "unknown field");
    }
    ExperimentConfig c;
    if (!j.contains("scenario")) config_error("scenario", "required field missing");
    if (!j.at("scenario").is_string()) config_error("scenario", "must be a string");
    c.scenario = scenario_from_string(j.at("scenario").get<std::string>());

    auto get_num = [&j](const char* key, double& out) {
        if (j.contains(key)) {
            if (!j.at(key).is_number()) config_error(key, "must be a number");
            out = j.at(key).get<double>();
        }
    };
    auto get_bool = [&j](const char* key, bool& out) {
        if (j.contains(key)) {
            if (!j.at(key).is_boolean()) config_error(key, "must be a boolean");
            out = j.at(key).get<bool>();
        }
    };
    if (j.contains("dims")) {
        if (!j.at("dims").is_array() || j.at("dims").empty()) {
            config_error("dims", "must be a nonempty array of integers");
        }
        c.dims.clear();
        int i = 0;
        for (const auto& e : j.at("dims")) {
            if (!e.is_number_integer()) config_error("dims[" + std::to_string(i) + "]",
                                                     "must be an integer");
            c.dims.push_back(e.get<int>());
            ++i;
        }
    }
    if (j.contains("instances_per_dim")) {
        if (!j.at("instances_per_dim").is_number_integer()) {
            config_error("instances_per_dim", "must be an integer");
        }
        c.instances_per_dim = j.at("instances_per_dim").get<int>();
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
            config_error("seed", "must be an integer");
        }
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    get_num("epsilon_p", c.epsilon_p);
    get_bool("require_region", c.require_region);
    get_num("s_max", c.s_max);
    get_num("max_step", c.max_step);
    if (j.contains("ensemble")) {
        if (!j.at("ensemble").is_string()) config_error("ensemble", "must be a string");
        c.ensemble = j.at("ensemble").get<std::string>();
    }
    get_num("cluster_width", c.cluster_width);
    get_num("theta0_margin", c.theta0_margin);
    get_bool("force_eigenphase_pi", c.force_eigenphase_pi);
    if (j.contains("threads")) {
        if (!j.at("threads").is_number_integer()) config_error("threads", "must be an integer");
        c.threads = j.at("threads").get<int>();
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) config_error("output_dir", "must be a string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    validate(c);
    return c;
}

SpectrumEnsemble ensemble_from_string(const std::string& name) {
    if (name == "uniform_spread") return SpectrumEnsemble::uniform_spread;
    if (name == "clustered_top_gap") return SpectrumEnsemble::clustered_top_gap;
    config_error("ensemble", "expected 'uniform_spread' or 'clustered_top_gap', got '" + name +
                                 "'");
}

}  // namespace

void validate(const ExperimentConfig& c) {
    for (std::size_t i = 0; i < c.dims.size(); ++i) {
        if (c.dims[i] < 2 || c.dims[i] > 512) {
            config_error("dims[" + std::to_string(i) + "]", "must be in [2, 512]");
        }
    }
    if (c.dims.empty()) config_error("dims", "must be nonempty");
    if (c.instances_per_dim < 1) config_error("instances_per_dim", "must be >= 1");
    if (!(c.epsilon_p > 0.0) || c.epsilon_p > 100.0) config_error("epsilon_p", "must be in (0, 100]");
    if (!(c.s_max > 0.0) || c.s_max > 1e6) config_error("s_max", "must be in (0, 1e6]");
    if (!(c.max_step > 0.0) || c.max_step > 0.01) {
        config_error("max_step", "must be in (0, 0.01] (path quadrature needs dense sampling)");
    }
    if (!(c.cluster_width > 0.0) || c.cluster_width > 1.0) {
        config_error("cluster_width", "must be in (0, 1]");
    }
    if (c.theta0_margin < 0.0 || c.theta0_margin > 1.0) {
        config_error("theta0_margin", "must be in [0, 1]");
    }
    if (c.threads < 0 || c.threads > 256) config_error("threads", "must be in [0, 256]");
    if (c.output_dir.empty()) config_error("output_dir", "must be nonempty");
    ensemble_from_string(c.ensemble);
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    return config_from_json(j);
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// -------------------------------------------------------------- scenarios --

namespace {

ScalingStudyConfig study_config_for(const ExperimentConfig& c) {
    ScalingStudyConfig s;
    s.dims = c.dims;
    s.instances_per_dim = c.instances_per_dim;
    s.seed = c.seed;
    s.epsilon_p = c.epsilon_p;
    s.require_region = c.require_region;
    s.ensemble = ensemble_from_string(c.ensemble);
    s.cluster_width = c.cluster_width;
    s.theta0_margin = c.theta0_margin;
    s.force_eigenphase_pi = c.force_eigenphase_pi;
    s.max_step = c.max_step;
    s.threads = c.threads;
    switch (c.scenario) {
        case Scenario::converge_observable:
            s.kind = ScalingStudyConfig::Kind::observable;
            s.normalize_gap = false;  // bounds are checked on the raw draws
            break;
        case Scenario::scaling_study:
            s.kind = ScalingStudyConfig::Kind::observable;
            s.normalize_gap = true;  // isolate N-scaling from gap-scaling
            break;
        case Scenario::converge_gate:
            s.kind = ScalingStudyConfig::Kind::gate;
            break;
        case Scenario::path_length_study:
            s.kind = ScalingStudyConfig::Kind::gate;
            s.with_trajectories = true;
            break;
        default:
            break;
    }
    return s;
}

// Deviation of the integrated flows from the closed forms for one instance.
struct AnalyticCheckResult {
    double deviation_observable = 0.0;
    double deviation_gate = 0.0;
    double invariant_residual = 0.0;
};

AnalyticCheckResult run_analytic_check_instance(int n, std::uint64_t seed, double s_max,
                                                double max_step) {
    Rng rng(seed);
    AnalyticCheckResult out;
    IntegratorOptions opts;
    opts.max_step = max_step;

    ObservableProblem prob(Spectrum::from_values(sample_spectrum_values(n, 0.0, 1.0, rng)),
                           RealVector::Constant(n, 1.0 / n));
    const SimplexTrajectory straj = integrate_replicator(prob, s_max, opts);
    for (const auto& sample : straj.samples) {
        const RealVector ref = analytic_x(sample.s, prob);
        out.deviation_observable =
            std::max(out.deviation_observable, (sample.state - ref).cwiseAbs().maxCoeff());
    }
    out.invariant_residual = straj.max_invariant_residual();

    GateProblem gate(sample_haar_unitary(n, rng), Matrix::Identity(n, n));
    const UnitaryTrajectory utraj = integrate_gate(gate, s_max, opts);
    for (const auto& sample : utraj.samples) {
        const Matrix ref = analytic_gate(sample.s, gate);
        out.deviation_gate = std::max(out.deviation_gate, (sample.state - ref).norm());
    }
    out.invariant_residual = std::max(out.invariant_residual, utraj.max_invariant_residual());
    return out;
}

json fit_to_json(const LinearFit& fit) {
    return json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}};
}

json config_to_json(const ExperimentConfig& c) {
    return json{{"scenario", to_string(c.scenario)},
                {"dims", c.dims},
                {"instances_per_dim", c.instances_per_dim},
                {"seed", c.seed},
                {"epsilon_p", c.epsilon_p},
                {"require_region", c.require_region},
                {"s_max", c.s_max},
                {"max_step", c.max_step},
                {"ensemble", c.ensemble},
                {"cluster_width", c.cluster_width},
                {"theta0_margin", c.theta0_margin},
                {"force_eigenphase_pi", c.force_eigenphase_pi},
                {"threads", c.threads},
                {"output_dir", c.output_dir}};
}

struct DemoOutcome {
    InstanceRecord record;
    json summary;
    int failures = 0;
};

// Two-level population transfer plus the gradient and chain-rule diagnostics.
DemoOutcome run_dyncontrol_demo(std::uint64_t seed) {
    DemoOutcome out;
    Matrix sz(2, 2), sx(2, 2);
    sz << 1, 0, 0, -1;
    sx << 0, 1, 1, 0;
    Matrix rho0 = Matrix::Zero(2, 2), theta = Matrix::Zero(2, 2);
    rho0(0, 0) = 1.0;
    theta(1, 1) = 1.0;
    const ControlSystem sys(sz, sx, 4.0, 64);

    Rng rng(seed);
    ControlField field0(sys.M);
    for (int m = 0; m < sys.M; ++m) field0(m) = rng.uniform(-0.1, 0.1);

    AscentOptions opts;
    opts.sigma = 0.5;
    opts.phi_target = 0.999;
    opts.max_iterations = 10000;
    const auto objective = ControlObjective::observable(rho0, theta);
    const AscentResult ascent = gradient_ascent(sys, field0, objective, opts);
    const double final_phi = ascent.history.back().phi;

    // Finite-difference agreement of both gradients on a random instance.
    const Matrix h0 = sample_gue_hermitian(2, rng);
    const Matrix dip = sample_gue_hermitian(2, rng);
    const ControlSystem rnd_sys(h0, dip, 2.0, 16);
    ControlField field(rnd_sys.M);
    for (int m = 0; m < rnd_sys.M; ++m) field(m) = rng.uniform(-0.5, 0.5);
    const Matrix w = sample_haar_unitary(2, rng);
    const Matrix a = Matrix::Identity(2, 2);

    auto fd_error = [&](const ControlObjective& obj) {
        const ControlField g = obj.gradient(rnd_sys, field);
        double worst = 0.0;
        const double delta = 1e-5;
        for (int m = 0; m < rnd_sys.M; ++m) {
            ControlField plus = field, minus = field;
            plus(m) += delta;
            minus(m) -= delta;
            const double fd = (obj.value(rnd_sys, propagate(rnd_sys, plus).U_T()) -
                               obj.value(rnd_sys, propagate(rnd_sys, minus).U_T())) /
                              (2.0 * delta);
            worst = std::max(worst, std::abs(g(m) - fd));
        }
        return worst / std::max(1e-12, g.cwiseAbs().maxCoeff());
    };
    const double fd1 = fd_error(ControlObjective::observable(rho0, theta));
    const double fd2 = fd_error(ControlObjective::gate(w, a));

    const double r1 = check_chain_rule(rnd_sys, field, objective, 1e-4).residual;
    const double r2 = check_chain_rule(rnd_sys, field, objective, 5e-5).residual;
    const double ratio = r2 / r1;

    if (final_phi < 0.999) ++out.failures;
    if (fd1 > 1e-5 || fd2 > 1e-5) ++out.failures;
    if (ratio < 0.4 || ratio > 0.6) ++out.failures;

    out.record.n = 2;
    out.record.seed = seed;
    out.record.converged = final_phi >= 0.999;
    out.record.invariant_max_residual = std::max(fd1, fd2);
    out.summary = json{
        {"final_phi1", final_phi},
        {"iterations", ascent.history.back().iteration},
        {"fd_relative_error_phi1", fd1},
        {"fd_relative_error_phi2", fd2},
        {"chain_rule_residual_1e-4", r1},
        {"chain_rule_halving_ratio", ratio},
        {"gradient_convention",
         json{{"phi1", "dPhi1/deps_m = Tr([U_T^H Theta U_T, rho0] Int_m mu(t) dt)"},
              {"phi2", "dPhi2/deps_m = (1/2) Tr((U_T^H W A - A W^H U_T) Int_m mu(t) dt)"},
              {"mu", "mu(t) = -i U(t)^H mu U(t), H(eps) = H0 - eps*mu, hbar = 1"}}}};
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config_in, std::ostream& log) {
    ExperimentConfig config = config_in;
    validate(config);
    if (const char* env = std::getenv("KINFLOW_THREADS")) {
        config.threads = std::max(0, std::atoi(env));
    }
    if (config.threads == 0) {
        config.threads = static_cast<int>(std::min(8u, std::thread::hardware_concurrency()));
        if (config.threads == 0) config.threads = 1;
    }

    ExperimentResult result;
    std::vector<std::string> rows;
    json summary;
    summary["scenario"] = to_string(config.scenario);
    summary["version"] = kVersion;

    switch (config.scenario) {
        case Scenario::analytic_check: {
            double worst_obs = 0.0, worst_gate = 0.0;
            for (int n : config.dims) {
                for (int i = 0; i < config.instances_per_dim; ++i) {
                    const std::uint64_t seed =
                        derive_seed(config.seed, static_cast<std::uint64_t>(n),
                                    static_cast<std::uint64_t>(i));
                    const AnalyticCheckResult chk =
                        run_analytic_check_instance(n, seed, config.s_max, config.max_step);
                    worst_obs = std::max(worst_obs, chk.deviation_observable);
                    worst_gate = std::max(worst_gate, chk.deviation_gate);
                    InstanceRecord rec;
                    rec.n = n;
                    rec.seed = seed;
                    rec.invariant_max_residual =
                        std::max(chk.deviation_observable, chk.deviation_gate);
                    rec.converged =
                        chk.deviation_observable <= 1e-8 && chk.deviation_gate <= 1e-6;
                    if (!rec.converged) {
                        ++result.invariant_failures;
                        if (result.first_failing_seed == 0) result.first_failing_seed = seed;
                    }
                    rows.push_back(record_to_csv(to_string(config.scenario), rec));
                }
            }
            summary["max_deviation_observable"] = worst_obs;
            summary["max_deviation_gate"] = worst_gate;
            summary["tolerance_observable"] = 1e-8;
            summary["tolerance_gate"] = 1e-6;
            break;
        }
        case Scenario::converge_observable:
        case Scenario::converge_gate:
        case Scenario::scaling_study:
        case Scenario::path_length_study: {
            const ScalingStudy study = run_scaling_study(study_config_for(config));
            for (const auto& rec : study.instances) {
                rows.push_back(record_to_csv(to_string(config.scenario), rec));
                if (!rec.converged) ++result.non_convergent;
                if (config.scenario == Scenario::path_length_study &&
                    std::isfinite(rec.path_length) && std::isfinite(rec.path_bound) &&
                    rec.path_length > rec.path_bound) {
                    ++result.bound_violations;
                    if (result.first_failing_seed == 0) result.first_failing_seed = rec.seed;
                }
            }
            result.bound_violations += study.bound_violations;
            result.invariant_failures += study.invariant_failures;
            if ((study.bound_violations || study.invariant_failures) &&
                result.first_failing_seed == 0) {
                for (const auto& rec : study.instances) {
                    const bool viol = rec.converged &&
                                      rec.t_measured > rec.bound_total * (1.0 + 1e-9) + 1e-9;
                    if (viol || rec.invariant_max_residual > 1e-9) {
                        result.first_failing_seed = rec.seed;
                        break;
                    }
                }
            }
            summary["tc_vs_log_dim"] = fit_to_json(study.tc_vs_log_dim);
            summary["log_length_vs_log_dim"] = fit_to_json(study.log_length_vs_log_dim);
            summary["pathological_resamples"] = study.pathological_resamples;
            break;
        }
        case Scenario::dyncontrol_demo: {
            const DemoOutcome demo = run_dyncontrol_demo(config.seed);
            rows.push_back(record_to_csv(to_string(config.scenario), demo.record));
            result.invariant_failures += demo.failures;
            if (demo.failures && result.first_failing_seed == 0) {
                result.first_failing_seed = config.seed;
            }
            for (auto it = demo.summary.begin(); it != demo.summary.end(); ++it) {
                summary[it.key()] = it.value();
            }
            break;
        }
    }

    result.exit_code = (result.bound_violations + result.invariant_failures) > 0 ? 1 : 0;
    summary["bound_violations"] = result.bound_violations;
    summary["invariant_failures"] = result.invariant_failures;
    summary["non_convergent_instances"] = result.non_convergent;
    summary["instances"] = rows.size();
    summary["exit_code"] = result.exit_code;
    if (result.exit_code != 0) summary["first_failing_seed"] = result.first_failing_seed;
    result.summary_json = summary.dump(2) + "\n";

    const std::filesystem::path out_dir(config.output_dir);
    std::filesystem::create_directories(out_dir);
    {
        json manifest;
        manifest["version"] = kVersion;
        manifest["config"] = config_to_json(config);
        std::ofstream f(out_dir / "manifest.json");
        f << manifest.dump(2) << "\n";
    }
    {
        std::ofstream f(out_dir / "records.csv");
        f << kCsvHeader << "\n";
        for (const auto& row : rows) f << row << "\n";
    }
    {
        std::ofstream f(out_dir / "summary.json");
        f << result.summary_json;
    }

    log << to_string(config.scenario) << ": " << rows.size() << " records, "
        << result.bound_violations << " bound violations, " << result.invariant_failures
        << " invariant failures";
    if (result.exit_code != 0) log << " (first failing seed " << result.first_failing_seed << ")";
    log << "\n";
    return result;
}

int replay_instance(Scenario scenario, int n, std::uint64_t seed,
                    const ExperimentConfig& config_in, std::ostream& out) {
    ExperimentConfig config = config_in;
    config.scenario = scenario;
    validate(config);
    out << kCsvHeader << "\n";
    switch (scenario) {
        case Scenario::analytic_check: {
            const AnalyticCheckResult chk =
                run_analytic_check_instance(n, seed, config.s_max, config.max_step);
            InstanceRecord rec;
            rec.n = n;
            rec.seed = seed;
            rec.invariant_max_residual = std::max(chk.deviation_observable, chk.deviation_gate);
            rec.converged = chk.deviation_observable <= 1e-8 && chk.deviation_gate <= 1e-6;
            out << record_to_csv(to_string(scenario), rec) << "\n";
            return rec.converged ? 0 : 1;
        }
        case Scenario::dyncontrol_demo: {
            const DemoOutcome demo = run_dyncontrol_demo(seed);
            out << record_to_csv(to_string(scenario), demo.record) << "\n";
            return demo.failures ? 1 : 0;
        }
        default: {
            const ScalingStudyConfig sc = study_config_for(config);
            const InstanceRecord rec = (sc.kind == ScalingStudyConfig::Kind::observable)
                                           ? run_observable_instance(n, seed, sc)
                                           : run_gate_instance(n, seed, sc);
            out << record_to_csv(to_string(scenario), rec) << "\n";
            const bool viol =
                rec.converged && rec.t_measured > rec.bound_total * (1.0 + 1e-9) + 1e-9;
            return (viol || rec.invariant_max_residual > 1e-9) ? 1 : 0;
        }
    }
}

}  // namespace kinflow
