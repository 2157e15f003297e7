// complexity.hpp — halting semantics, measured convergence times, the
// closed-form convergence-time and path-length bounds, and dimension-scaling
// studies.
#pragma once

#include "kinflow/flows.hpp"
#include "kinflow/random.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace kinflow {

// The computation halts on entering the ε_p-ball around the optimum
// intersected (when require_region) with its attracting region.
struct HaltSpec {
    double epsilon_p = 0.01;
    bool require_region = true;
};

struct ConvergenceReport {
    double t_measured = std::numeric_limits<double>::infinity();
    double bound_tc_eps = 0.0;
    double bound_tc_region = 0.0;
    double bound_tc_total = 0.0;
    bool converged = false;
    double t_region_entry = 0.0;  // first entry into the attracting region
    double final_distance = std::numeric_limits<double>::quiet_NaN();
    const SimplexTrajectory* simplex_curve = nullptr;  // non-owning, set by trajectory routes
    const UnitaryTrajectory* unitary_curve = nullptr;
};

// -------------------------------------------------------------- distances --

inline double distance_observable(const RealVector& x, const ObservableProblem& p) {
    return observable_distance(x, p.multiplicity_k);
}

inline double distance_gate(const Matrix& uprime) { return gate_distance(uprime); }

// Σ λ_j x_j > λ_{k+1}: equivalent to ẋ_i < 0 for every suboptimal mode.
bool in_attracting_region(const RealVector& x, const ObservableProblem& p);

// For A = I the gate solution attracts all of U(N).
constexpr bool in_attracting_region_gate() { return true; }

// ----------------------------------------------------------------- bounds --

// (1/2μ) ln(2k / (ε² x0_1)); for the uniform start this is (1/2μ) ln(2Nk/ε²).
// μ = λ_(1) − λ_{k+1}; a fully degenerate top (μ ≤ 0) reports +∞.
double bound_tc_eps_observable(const Spectrum& spectrum, int k, const RealVector& x0,
                               double eps);

// (1/μ) ln[(N−k−2) λ_{k+1} x0_{k+1} / Σ_{i≤k}(λ_(1) x0_i − λ_{k+1} x0_{k+1})],
// clamped to 0 when the argument drops to 1 or the numerator is nonpositive
// (the region condition already holds); +∞ when the denominator is
// nonpositive (the derivation is vacuous there).
double bound_tc_region_observable(const Spectrum& spectrum, int k, const RealVector& x0);

struct GateBoundReport {
    double theta0 = 0.0;
    double a = 0.0;          // sin θ0 / (1 − cos θ0)
    double delta = 0.0;      // 1 − x_c_minus
    double x_c_minus = 0.0;
    double t_bound = 0.0;    // ln((1+x)/(1−x)), the certified bound
    double t_tight = 0.0;    // artanh(x) = t_bound / 2
    double t_approx = 0.0;   // ½ ln(4N/(a²ε)), small-ε form
    bool convergent = true;  // false at θ0 = π
};

// ε here bounds the squared Frobenius distance (the vicinity is ‖U'−I‖² < ε).
GateBoundReport bound_tc_gate(double theta0, double eps, int n);

// π √(2N) |sin θ0| / √(1 − x_c); +∞ at x_c = 1.
double bound_path_length(double theta0, int n, double x_c);

// ------------------------------------------------------- measured halting --

// Closed-form routes: the region indicator Σλx − λ_{k+1} is nondecreasing and
// the distance is nonincreasing once inside, so the first halting time is
// located by two monotone bisections, refined to 1e-6 in s.
ConvergenceReport measure_tc(const ObservableProblem& p, const HaltSpec& halt, double s_max);

// Gate flow with A = I: distance is globally nonincreasing.
ConvergenceReport measure_tc(const GateProblem& p, const HaltSpec& halt, double s_max);

// Trajectory routes: first sample meeting the halting predicate, refined by
// linear interpolation between the bracketing samples.
ConvergenceReport measure_tc(const SimplexTrajectory& traj, const ObservableProblem& p,
                             const HaltSpec& halt);
ConvergenceReport measure_tc(const UnitaryTrajectory& traj, const GateProblem& p,
                             const HaltSpec& halt);

// ------------------------------------------------------------ path length --

// Trapezoidal quadrature of the stored speed. Requires at least 100 samples
// per unit of algorithmic time.
double path_length(const SimplexTrajectory& traj);
double path_length(const UnitaryTrajectory& traj);

// Closed-form gate speed √(2(N − Re Tr U'²)) = ‖dU'/ds‖_F along the A = I flow.
double gate_path_speed(const Matrix& uprime);

// Quadrature of the closed-form gate integrand over the trajectory's grid,
// the independent cross-check of the stored-speed quadrature.
double path_length_gate_closed_form(const UnitaryTrajectory& traj);

// ---------------------------------------------------------------- fitting --

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// Least-squares rate of the exponential tail of 1 − x1(s) on the window
// s ∈ [10, 30]/(2μ); equals 2μ for a nondegenerate top eigenvalue.
double fit_decay_rate(const ObservableProblem& p);

// --------------------------------------------------------- scaling studies --

enum class SpectrumEnsemble {
    uniform_spread,    // i.i.d. uniform values (optionally gap-normalized)
    clustered_top_gap  // λ1 − λ2 = 1 with the rest packed within cluster_width
};

struct ScalingStudyConfig {
    enum class Kind { observable, gate } kind = Kind::observable;
    std::vector<int> dims;
    int instances_per_dim = 1;
    std::uint64_t seed = 0;
    double epsilon_p = 0.01;
    bool require_region = true;
    SpectrumEnsemble ensemble = SpectrumEnsemble::clustered_top_gap;
    double cluster_width = 0.25;
    bool normalize_gap = true;   // affine map to λ1 = 1, λ2 = 0 (uniform_spread)
    double theta0_margin = 0.1;  // gate: resample while π − |θ0| < margin
    bool force_eigenphase_pi = false;  // gate: pin the worst mode to θ = π
    bool with_trajectories = false;    // integrate flows and measure path lengths
    double max_step = 0.01;
    double s_max_cap = 1e6;  // the closed-form halting search is logarithmic in this
    int threads = 1;
};

struct InstanceRecord {
    int n = 0;
    std::uint64_t seed = 0;
    double t_measured = std::numeric_limits<double>::quiet_NaN();
    double bound_eps = std::numeric_limits<double>::quiet_NaN();
    double bound_region = std::numeric_limits<double>::quiet_NaN();
    double bound_total = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    double path_length = std::numeric_limits<double>::quiet_NaN();
    double path_bound = std::numeric_limits<double>::quiet_NaN();
    double invariant_max_residual = 0.0;
    double theta0 = std::numeric_limits<double>::quiet_NaN();
    int resamples = 0;
};

struct ScalingStudy {
    ScalingStudyConfig config;
    std::vector<InstanceRecord> instances;
    LinearFit tc_vs_log_dim;          // measured t_c against ln N
    LinearFit log_length_vs_log_dim;  // ln L against ln N (with_trajectories)
    int bound_violations = 0;
    int invariant_failures = 0;
    int pathological_resamples = 0;
};

// Deterministic given the config: instance i of dimension N runs on
// derive_seed(config.seed, N, i) regardless of thread count.
ScalingStudy run_scaling_study(const ScalingStudyConfig& config);

// Single-instance entry points used by the study and by CLI replay.
InstanceRecord run_observable_instance(int n, std::uint64_t instance_seed,
                                       const ScalingStudyConfig& config);
InstanceRecord run_gate_instance(int n, std::uint64_t instance_seed,
                                 const ScalingStudyConfig& config);

}  // namespace kinflow
