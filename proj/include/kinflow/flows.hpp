// flows.hpp — kinematic gradient flows of the observable and gate objectives:
// flow fields, closed-form solutions, and structure-preserving integrators.
#pragma once

#include "kinflow/matcore.hpp"

#include <functional>
#include <string>
#include <vector>

namespace kinflow {

// ---------------------------------------------------------------- simplex --

// Throws unless Σx = 1 within sum_tol and x_i >= -neg_tol.
void require_simplex(const RealVector& x, double sum_tol = 1e-12, double neg_tol = 1e-14);

// Clamps tiny negatives to zero and renormalizes the sum to one.
RealVector clamp_to_simplex(RealVector x);

// |Σx − 1| + max(0, −min x): the per-step invariant residual.
double simplex_residual(const RealVector& x);

// --------------------------------------------------------------- problems --

/// Observable maximization from a pure state, expressed in the eigenbasis of
/// the observable: spectrum λ (descending) and initial populations x0.
struct ObservableProblem {
    Spectrum spectrum;
    RealVector x0;
    int multiplicity_k = 1;  // degeneracy of λ1 under spectrum.degeneracy_tol

    ObservableProblem(Spectrum sp, RealVector x0_init);

    // Builds the eigenbasis representation from Θ and a pure ρ0.
    static ObservableProblem from_operators(const Matrix& theta, const Matrix& rho0);

    int dim() const { return spectrum.dim(); }
    double mu() const { return spectrum.top_gap(); }

    // x(∞) = (1/k)(1,…,1,0,…,0).
    RealVector solution_point() const;

    Matrix theta() const { return spectrum.reconstruct(); }

    // Canonical pure state with the given populations: ψ = Σ √x0_i v_i.
    Matrix rho0_pure() const;
};

/// Gate fidelity maximization toward target W from initial guess U0 with
/// Hermitian weight A. The A = I analytic machinery is driven by the
/// eigenphases of K = W†U0, cached at construction.
struct GateProblem {
    Matrix W;
    Matrix U0;
    Matrix A;
    RealVector phases;   // eigenphases of W, ordered by increasing cos
    Matrix frame;        // W = frame† diag(e^{-iθ}) frame
    double theta0 = 0.0; // the eigenphase with minimal cos θ
    RealVector k_phases; // eigenphases of K = W†U0
    Matrix k_frame;

    GateProblem(Matrix w, Matrix u0);
    GateProblem(Matrix w, Matrix u0, Matrix a);

    int dim() const { return static_cast<int>(W.rows()); }
    bool identity_weight(double tol = 1e-12) const;

    // cos θ0 at −1: the flow from U0 never reaches the solution.
    bool pathological(double tol = 1e-9) const { return std::cos(theta0) <= -1.0 + tol; }
};

// ------------------------------------------------------------- objectives --

// Φ1 = Σ λ_i x_i (pure-state expectation value in the observable eigenbasis).
double phi1(const RealVector& x, const Spectrum& spectrum);

// Φ2 = Re Tr(A W† U).
double phi2(const Matrix& u, const Matrix& w, const Matrix& a);
double phi2(const Matrix& u, const GateProblem& p);

// ------------------------------------------------------------ flow fields --

// dU/ds = −U [ρ0, U†ΘU]. U†·(result) is anti-Hermitian.
Matrix observable_flow_rhs(const Matrix& u, const Matrix& rho0, const Matrix& theta);

// dU'/ds = A − U'AU' in the rotated frame U' = W†U.
Matrix gate_flow_rhs(const Matrix& uprime, const Matrix& a);

// dx_i/ds = 2 x_i (λ_i − Σ λ_j x_j): the population form of the pure-state flow.
RealVector replicator_rhs(const RealVector& x, const RealVector& lambda);

// dρ/ds = [ρ, [ρ, Θ]]: isospectral ascent of Tr(ρΘ). Hermitian and traceless.
Matrix double_bracket_rhs(const Matrix& rho, const Matrix& theta);

// -------------------------------------------------------------- distances --

// ‖x − (1/k)(1,…,1,0,…,0)‖_2
double observable_distance(const RealVector& x, int k);

// ‖U' − I‖_F
double gate_distance(const Matrix& uprime);

// ---------------------------------------------------------- closed forms --

// x_i(s) = x_i(0) e^{2sλ_i} / Σ_j x_j(0) e^{2sλ_j}, evaluated with shifted
// exponents so arbitrarily large s·λ cannot overflow.
RealVector analytic_x(double s, const ObservableProblem& p);

// U'(s) = (tanh(s)·I + K)(I + tanh(s)·K)^{-1}, K = W†U0; requires A = I.
// Throws when the resolvent condition number exceeds 1e12.
Matrix analytic_gate(double s, const GateProblem& p);

// Per-mode values z_k(s) = (tanh s + κ_k)/(1 + κ_k tanh s) for the eigenvalues
// κ_k = e^{-iφ_k} of K (φ from eig_unitary).
ComplexVector gate_mode_values(double s, const RealVector& k_phases);

// ‖U'(s) − I‖_F from the per-mode closed form; requires A = I.
double analytic_gate_distance(double s, const GateProblem& p);

// Populations of U ρ0 U† in the problem's eigenbasis.
RealVector populations(const Matrix& u, const ObservableProblem& p);

// ------------------------------------------------------------ trajectories --

struct StepStat {
    double s = 0.0;  // algorithmic time after the step
    double h = 0.0;
    double invariant_residual = 0.0;
};

template <class State>
struct FlowSample {
    double s = 0.0;
    State state;
    double objective = 0.0;
    double distance = 0.0;
    double speed = 0.0;  // ‖rhs‖ at the sample, used for path-length quadrature
};

template <class State>
struct FlowTrajectory {
    std::vector<FlowSample<State>> samples;
    std::vector<StepStat> step_stats;
    bool completed = true;
    std::string diagnostic;

    double max_invariant_residual() const {
        double r = 0.0;
        for (const auto& st : step_stats) r = std::max(r, st.invariant_residual);
        return r;
    }
};

using SimplexTrajectory = FlowTrajectory<RealVector>;
using UnitaryTrajectory = FlowTrajectory<Matrix>;

struct IntegratorOptions {
    double max_step = 0.01;
    double step_norm_cap = 0.1;  // h = min(max_step, step_norm_cap / ‖rhs‖)
    double min_step = 1e-10;     // underflow guard: below this the run aborts
};

// Classical RK4 on the replicator field with per-step clamp/renormalize;
// the pre-projection residual is recorded in step_stats.
SimplexTrajectory integrate_replicator(const ObservableProblem& p, double s_max,
                                       const IntegratorOptions& opts = {});

// 4-stage Runge-Kutta–Munthe-Kaas scheme with geodesic updates
// U ← U · expm_skew(σ); every stored state is unitary to integrator precision.
UnitaryTrajectory integrate_unitary_flow(
    const Matrix& u0, const std::function<Matrix(const Matrix&)>& rhs, double s_max,
    const IntegratorOptions& opts, const std::function<double(const Matrix&)>& objective,
    const std::function<double(const Matrix&)>& distance);

// Gate flow integrated in the U' = W†U frame (recover U as W·U').
UnitaryTrajectory integrate_gate(const GateProblem& p, double s_max,
                                 const IntegratorOptions& opts = {});

// Unitary-group form of the observable flow, kept for cross-validation of the
// replicator representation. States are U(s); objective and distance are
// evaluated on the populations.
UnitaryTrajectory integrate_observable_unitary(const ObservableProblem& p, double s_max,
                                               const IntegratorOptions& opts = {});

// Mixed-state double-bracket flow. Integrated as the lifted unitary
// conjugation ρ = Vρ0V†, dV/ds = −[ρ,Θ]V, so the spectrum of ρ is preserved
// by construction; samples carry ρ(s).
UnitaryTrajectory integrate_double_bracket(const Matrix& rho0, const Matrix& theta,
                                           double s_max, const IntegratorOptions& opts = {});

}  // namespace kinflow
