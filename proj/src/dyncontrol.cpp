#include "kinflow/dyncontrol.hpp"

#include <cmath>
#include <sstream>

namespace kinflow {

ControlSystem::ControlSystem(Matrix h0, Matrix dipole, double horizon, int intervals)
    : H0(std::move(h0)), mu(std::move(dipole)), T(horizon), M(intervals) {
    require_hermitian(H0, 1e-12, "ControlSystem(H0)");
    require_hermitian(mu, 1e-12, "ControlSystem(mu)");
    if (mu.rows() != H0.rows()) throw std::invalid_argument("ControlSystem: dimension mismatch");
    if (!(T > 0.0)) throw std::invalid_argument("ControlSystem: horizon T must be > 0");
    if (M < 2) throw std::invalid_argument("ControlSystem: need at least 2 intervals");
}

Propagation propagate(const ControlSystem& sys, const ControlField& field) {
    if (field.size() != sys.M) throw std::invalid_argument("propagate: field size != M");
    const int n = sys.dim();
    const double dt = sys.dt();
    Propagation prop;
    prop.U_grid.reserve(sys.M + 1);
    prop.U_grid.push_back(Matrix::Identity(n, n));
    prop.step_frames.reserve(sys.M);
    prop.step_energies.reserve(sys.M);
    for (int m = 0; m < sys.M; ++m) {
        const Matrix h = sys.H0 - field(m) * sys.mu;
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        ComplexVector ph(n);
        for (int k = 0; k < n; ++k) ph(k) = std::polar(1.0, -es.eigenvalues()(k) * dt);
        const Matrix step = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
        prop.U_grid.push_back(step * prop.U_grid.back());
        prop.step_frames.push_back(es.eigenvectors());
        prop.step_energies.push_back(es.eigenvalues());
    }
    return prop;
}

std::vector<Matrix> heisenberg_dipole(const ControlSystem& sys,
                                      const std::vector<Matrix>& u_grid) {
    std::vector<Matrix> out;
    out.reserve(u_grid.size());
    for (const Matrix& u : u_grid) {
        out.push_back(Complex(0.0, -1.0) * (u.adjoint() * sys.mu * u));
    }
    return out;
}

Matrix dipole_interval_integral(const ControlSystem& sys, const Propagation& prop, int m) {
    const int n = sys.dim();
    const double dt = sys.dt();
    const Matrix& e_frame = prop.step_frames[m];
    const RealVector& e = prop.step_energies[m];
    const Matrix d = e_frame.adjoint() * sys.mu * e_frame;
    Matrix dz(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const double om = e(a) - e(b);
            Complex zeta;
            if (std::abs(om * dt) < 1e-8) {
                zeta = Complex(dt, 0.5 * om * dt * dt);  // Δt(1 + iωΔt/2)
            } else {
                zeta = (std::polar(1.0, om * dt) - Complex(1.0, 0.0)) / Complex(0.0, om);
            }
            dz(a, b) = d(a, b) * zeta;
        }
    }
    const Matrix inner = e_frame * dz * e_frame.adjoint();
    const Matrix& ug = prop.U_grid[m];
    return Complex(0.0, -1.0) * (ug.adjoint() * inner * ug);
}

namespace {

double real_trace_checked(const Matrix& product, const char* where) {
    const Complex tr = product.trace();
    if (std::abs(tr.imag()) > 1e-10 * (1.0 + std::abs(tr.real()))) {
        std::ostringstream os;
        os << where << ": imaginary residual " << tr.imag() << " exceeds tolerance";
        throw std::runtime_error(os.str());
    }
    return tr.real();
}

// Gradient core: g_m = Re Tr(C · M_m) with C anti-Hermitian per objective.
ControlField gradient_from_core(const ControlSystem& sys, const Propagation& prop,
                                const Matrix& core, const char* where) {
    ControlField g(sys.M);
    for (int m = 0; m < sys.M; ++m) {
        g(m) = real_trace_checked(core * dipole_interval_integral(sys, prop, m), where);
    }
    return g;
}

Matrix phi1_core(const Matrix& u_t, const Matrix& rho0, const Matrix& theta) {
    const Matrix theta_t = u_t.adjoint() * theta * u_t;
    return commutator(theta_t, rho0);
}

Matrix phi2_core(const Matrix& u_t, const Matrix& w, const Matrix& a) {
    return 0.5 * (u_t.adjoint() * w * a - a * w.adjoint() * u_t);
}

}  // namespace

ControlField grad_phi1(const ControlSystem& sys, const ControlField& field, const Matrix& rho0,
                       const Matrix& theta) {
    require_hermitian(rho0, 1e-12, "grad_phi1(rho0)");
    require_hermitian(theta, 1e-12, "grad_phi1(theta)");
    const Propagation prop = propagate(sys, field);
    return gradient_from_core(sys, prop, phi1_core(prop.U_T(), rho0, theta), "grad_phi1");
}

ControlField grad_phi2(const ControlSystem& sys, const ControlField& field, const Matrix& w,
                       const Matrix& a) {
    require_unitary(w, 1e-10, "grad_phi2(W)");
    require_hermitian(a, 1e-12, "grad_phi2(A)");
    const Propagation prop = propagate(sys, field);
    return gradient_from_core(sys, prop, phi2_core(prop.U_T(), w, a), "grad_phi2");
}

GMatrix g_matrix(const ControlSystem& sys, const std::vector<Matrix>& u_grid) {
    const int n = sys.dim();
    if (n > 32) {
        throw std::invalid_argument(
            "g_matrix: dimension above the N = 32 limit (N^4 storage); refusing");
    }
    if (u_grid.size() != static_cast<std::size_t>(sys.M + 1)) {
        throw std::invalid_argument("g_matrix: u_grid must hold M+1 propagators");
    }
    const double dt = sys.dt();
    const std::vector<Matrix> mus = heisenberg_dipole(sys, u_grid);
    GMatrix g;
    g.n = n;
    g.entries = Matrix::Zero(n * n, n * n);
    for (int m = 0; m <= sys.M; ++m) {
        const double w = (m == 0 || m == sys.M) ? 0.5 * dt : dt;  // trapezoid weights
        ComplexVector v(n * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) v(g.idx(i, j)) = mus[m](i, j);
        g.entries.noalias() += w * (v * v.transpose());  // plain transpose: symmetric, not Hermitian
    }
    return g;
}

ControlObjective ControlObjective::observable(Matrix rho0, Matrix theta) {
    ControlObjective obj;
    obj.kind = ObjectiveKind::phi1;
    obj.op_a = std::move(rho0);
    obj.op_b = std::move(theta);
    return obj;
}

ControlObjective ControlObjective::gate(Matrix w, Matrix a) {
    ControlObjective obj;
    obj.kind = ObjectiveKind::phi2;
    obj.op_a = std::move(w);
    obj.op_b = std::move(a);
    return obj;
}

double ControlObjective::value(const ControlSystem&, const Matrix& u_t) const {
    if (kind == ObjectiveKind::phi1) {
        return (u_t * op_a * u_t.adjoint() * op_b).trace().real();
    }
    return phi2(u_t, op_a, op_b);
}

ControlField ControlObjective::gradient(const ControlSystem& sys,
                                        const ControlField& field) const {
    return (kind == ObjectiveKind::phi1) ? grad_phi1(sys, field, op_a, op_b)
                                         : grad_phi2(sys, field, op_a, op_b);
}

ChainRuleCheck check_chain_rule(const ControlSystem& sys, const ControlField& field,
                                const ControlObjective& objective, double ds) {
    if (!(ds > 0.0) || ds > 1e-4) {
        throw std::invalid_argument("check_chain_rule: need 0 < ds <= 1e-4");
    }
    const Propagation prop = propagate(sys, field);
    const Matrix& u_t = prop.U_T();
    const Matrix core = (objective.kind == ObjectiveKind::phi1)
                            ? phi1_core(u_t, objective.op_a, objective.op_b)
                            : phi2_core(u_t, objective.op_a, objective.op_b);

    std::vector<Matrix> interval_integrals(sys.M);
    ControlField g(sys.M);
    for (int m = 0; m < sys.M; ++m) {
        interval_integrals[m] = dipole_interval_integral(sys, prop, m);
        g(m) = real_trace_checked(core * interval_integrals[m], "check_chain_rule");
    }

    ChainRuleCheck check;
    check.gradient_norm = g.norm();
    if (check.gradient_norm < 1e-12) {
        check.at_critical_point = true;
        check.residual = std::numeric_limits<double>::quiet_NaN();
        return check;
    }

    // dε_m/ds = δΦ/δε averaged on interval m, i.e. g_m/Δt.
    const ControlField gbar = g / sys.dt();
    const ControlField stepped = field + ds * gbar;
    const Matrix u_after = propagate(sys, stepped).U_T();

    // Body-frame response vs the G-mediated tangent: with
    // G_{(ij),(pq)} = Σ_m M_m,ij M_m,pq / Δt this contraction is exactly
    // Σ_m M_m g_m/Δt, so the comparison carries no quadrature error.
    Matrix predicted = Matrix::Zero(sys.dim(), sys.dim());
    for (int m = 0; m < sys.M; ++m) predicted -= interval_integrals[m] * gbar(m);
    const Matrix lhs = (u_t.adjoint() * ((u_after - u_t) / ds)).eval();
    check.residual = (lhs - predicted).norm() / predicted.norm();
    return check;
}

AscentResult gradient_ascent(const ControlSystem& sys, const ControlField& field0,
                             const ControlObjective& objective, const AscentOptions& opts) {
    if (!(opts.sigma > 0.0)) throw std::invalid_argument("gradient_ascent: sigma must be > 0");
    AscentResult result;
    result.field = field0;

    auto distance_to_target = [&](const Matrix& u_t) -> double {
        if (objective.kind == ObjectiveKind::phi2) {
            return gate_distance((objective.op_a.adjoint() * u_t).eval());
        }
        return std::numeric_limits<double>::quiet_NaN();
    };

    double sigma = opts.sigma;
    Propagation prop = propagate(sys, result.field);
    double phi = objective.value(sys, prop.U_T());
    ControlField grad = objective.gradient(sys, result.field);
    result.history.push_back({0, phi, grad.norm(), distance_to_target(prop.U_T()), sigma});

    int consecutive_decreases = 0;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        if (grad.norm() < opts.gradient_tol) break;
        if (phi >= opts.phi_target) break;
        const double dist = result.history.back().distance;
        if (opts.epsilon_p > 0.0 && std::isfinite(dist) && dist < opts.epsilon_p) break;

        if (opts.backtracking) {
            bool accepted = false;
            for (int bt = 0; bt < 40; ++bt) {
                const ControlField trial = result.field + sigma * grad;
                const Propagation trial_prop = propagate(sys, trial);
                const double trial_phi = objective.value(sys, trial_prop.U_T());
                if (trial_phi >= phi) {
                    result.field = trial;
                    prop = trial_prop;
                    phi = trial_phi;
                    accepted = true;
                    sigma = std::min(sigma * 1.5, 1e6);
                    break;
                }
                sigma *= 0.5;
            }
            if (!accepted) {
                result.diagnostic = "backtracking stalled: no ascent direction step accepted";
                break;
            }
        } else {
            result.field += sigma * grad;
            prop = propagate(sys, result.field);
            const double next_phi = objective.value(sys, prop.U_T());
            consecutive_decreases = (next_phi < phi) ? consecutive_decreases + 1 : 0;
            phi = next_phi;
            if (consecutive_decreases >= 10) {
                result.diverged = true;
                result.diagnostic = "objective decreased across 10 consecutive steps (step too large)";
                result.history.push_back(
                    {it, phi, grad.norm(), distance_to_target(prop.U_T()), sigma});
                break;
            }
        }
        grad = objective.gradient(sys, result.field);
        result.history.push_back({it, phi, grad.norm(), distance_to_target(prop.U_T()), sigma});
    }
    return result;
}

}  // namespace kinflow
