// dyncontrol.hpp — Hamiltonian-dependent layer: piecewise-constant control
// fields, Schrödinger propagation, field-space gradients of both objectives,
// the N²×N² coupling matrix G, and a gradient-ascent loop.
#pragma once

#include "kinflow/flows.hpp"

#include <string>
#include <vector>

namespace kinflow {

/// Drift H0, dipole operator mu, horizon T, and M uniform intervals (ħ = 1,
/// coupling H(ε) = H0 − ε·mu).
struct ControlSystem {
    Matrix H0;
    Matrix mu;
    double T = 1.0;
    int M = 2;

    ControlSystem(Matrix h0, Matrix dipole, double horizon, int intervals);

    int dim() const { return static_cast<int>(H0.rows()); }
    double dt() const { return T / M; }
};

// One amplitude per interval.
using ControlField = RealVector;

struct Propagation {
    std::vector<Matrix> U_grid;            // M+1 entries, U_grid[0] = I
    std::vector<Matrix> step_frames;       // eigenvectors of each interval H_m
    std::vector<RealVector> step_energies; // eigenvalues of each interval H_m

    const Matrix& U_T() const { return U_grid.back(); }
};

// U advanced interval by interval via exp(−i(H0 − ε_m·mu)Δt).
Propagation propagate(const ControlSystem& sys, const ControlField& field);

// μ(t_m) = −i U_grid[m]† · mu · U_grid[m]; anti-Hermitian.
std::vector<Matrix> heisenberg_dipole(const ControlSystem& sys,
                                      const std::vector<Matrix>& u_grid);

// ∫_{t_m}^{t_{m+1}} μ(t) dt in closed form via the interval eigenbasis.
Matrix dipole_interval_integral(const ControlSystem& sys, const Propagation& prop, int m);

// Exact partial derivatives ∂Φ/∂ε_m of the discretized objectives. The
// functional derivative δΦ/δε(t) on interval m is g_m/Δt (its exact interval
// average, reported at the interval midpoint).
//   Φ1: g_m = Tr([U_T†ΘU_T, ρ0] ∫_m μ(t) dt)
//   Φ2: g_m = ½ Tr((U_T†WA − AW†U_T) ∫_m μ(t) dt)
// Both are validated against central finite differences; the sign and scale
// conventions are the ones the finite-difference oracle fixes.
ControlField grad_phi1(const ControlSystem& sys, const ControlField& field, const Matrix& rho0,
                       const Matrix& theta);
ControlField grad_phi2(const ControlSystem& sys, const ControlField& field, const Matrix& w,
                       const Matrix& a);

/// G_{(ij),(pq)} = ∫_0^T μ_{ij}(t) μ_{pq}(t) dt, complex symmetric under
/// pair swap; vec index is i·N + j. Dimensions above 32 are rejected (N⁴
/// storage).
struct GMatrix {
    int n = 0;
    Matrix entries;  // N² × N²

    Eigen::Index idx(int i, int j) const { return static_cast<Eigen::Index>(i) * n + j; }
};

// Trapezoidal quadrature of the entrywise products over the time grid.
GMatrix g_matrix(const ControlSystem& sys, const std::vector<Matrix>& u_grid);

enum class ObjectiveKind { phi1, phi2 };

/// Parameters of the objective being climbed: (rho0, theta) for phi1,
/// (W, A) for phi2.
struct ControlObjective {
    ObjectiveKind kind = ObjectiveKind::phi1;
    Matrix op_a;  // rho0 or W
    Matrix op_b;  // theta or A

    static ControlObjective observable(Matrix rho0, Matrix theta);
    static ControlObjective gate(Matrix w, Matrix a);

    double value(const ControlSystem& sys, const Matrix& u_t) const;
    ControlField gradient(const ControlSystem& sys, const ControlField& field) const;
};

struct ChainRuleCheck {
    double residual = 0.0;       // ‖U_T†ΔU/δs − G-mediated prediction‖/‖prediction‖
    double gradient_norm = 0.0;
    bool at_critical_point = false;
};

// One explicit gradient step of size δs on the field; compares the first-order
// propagator response against the G-mediated tangent (the G used here takes
// each interval product integral exactly so the comparison is quadrature-free).
ChainRuleCheck check_chain_rule(const ControlSystem& sys, const ControlField& field,
                                const ControlObjective& objective, double ds);

struct AscentRecord {
    int iteration = 0;
    double phi = 0.0;
    double gradient_norm = 0.0;
    double distance = std::numeric_limits<double>::quiet_NaN();
    double sigma = 0.0;
};

struct AscentOptions {
    double sigma = 0.1;          // initial (or fixed) step size
    bool backtracking = true;    // halve on decrease, grow on acceptance
    double gradient_tol = 1e-8;
    double epsilon_p = 0.0;      // halt when distance-to-target < epsilon_p (if > 0)
    double phi_target = std::numeric_limits<double>::infinity();
    int max_iterations = 1000;
};

struct AscentResult {
    std::vector<AscentRecord> history;
    ControlField field;
    bool diverged = false;
    std::string diagnostic;
};

// Explicit-Euler ascent on the field. Without backtracking, ten consecutive
// decreases of Φ abort the run with a step-size diagnostic.
AscentResult gradient_ascent(const ControlSystem& sys, const ControlField& field0,
                             const ControlObjective& objective, const AscentOptions& opts = {});

}  // namespace kinflow
