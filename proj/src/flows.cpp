#include "kinflow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kinflow {

// ---------------------------------------------------------------- simplex --

void require_simplex(const RealVector& x, double sum_tol, double neg_tol) {
    if (x.size() == 0) throw std::invalid_argument("require_simplex: empty vector");
    const double sum = x.sum();
    if (std::abs(sum - 1.0) > sum_tol) {
        std::ostringstream os;
        os << "require_simplex: sum " << sum << " deviates from 1 by more than " << sum_tol;
        throw std::invalid_argument(os.str());
    }
    if (x.minCoeff() < -neg_tol) {
        std::ostringstream os;
        os << "require_simplex: negative entry " << x.minCoeff();
        throw std::invalid_argument(os.str());
    }
}

RealVector clamp_to_simplex(RealVector x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = std::max(x(i), 0.0);
    const double sum = x.sum();
    if (sum <= 0.0) throw std::invalid_argument("clamp_to_simplex: vanishing total population");
    return x / sum;
}

double simplex_residual(const RealVector& x) {
    return std::abs(x.sum() - 1.0) + std::max(0.0, -x.minCoeff());
}

// --------------------------------------------------------------- problems --

ObservableProblem::ObservableProblem(Spectrum sp, RealVector x0_init)
    : spectrum(std::move(sp)) {
    if (x0_init.size() != spectrum.values.size()) {
        throw std::invalid_argument("ObservableProblem: x0 and spectrum dimensions differ");
    }
    require_simplex(x0_init);
    x0 = clamp_to_simplex(std::move(x0_init));
    multiplicity_k = spectrum.top_multiplicity();
}

ObservableProblem ObservableProblem::from_operators(const Matrix& theta, const Matrix& rho0) {
    require_hermitian(rho0, 1e-12, "ObservableProblem::from_operators(rho0)");
    Spectrum sp = eigh(theta);
    RealVector x = (sp.frame.adjoint() * rho0 * sp.frame).diagonal().real();
    return ObservableProblem(std::move(sp), clamp_to_simplex(std::move(x)));
}

RealVector ObservableProblem::solution_point() const {
    RealVector target = RealVector::Zero(dim());
    target.head(multiplicity_k).setConstant(1.0 / multiplicity_k);
    return target;
}

Matrix ObservableProblem::rho0_pure() const {
    ComplexVector psi(dim());
    for (int i = 0; i < dim(); ++i) psi(i) = std::sqrt(x0(i));
    const ComplexVector v = spectrum.frame * psi;
    return v * v.adjoint();
}

GateProblem::GateProblem(Matrix w, Matrix u0)
    : GateProblem(std::move(w), std::move(u0), Matrix()) {}

GateProblem::GateProblem(Matrix w, Matrix u0, Matrix a) : W(std::move(w)), U0(std::move(u0)) {
    require_unitary(W, 1e-10, "GateProblem(W)");
    require_unitary(U0, 1e-10, "GateProblem(U0)");
    if (U0.rows() != W.rows()) throw std::invalid_argument("GateProblem: W/U0 dimension mismatch");
    if (a.size() == 0) {
        A = Matrix::Identity(W.rows(), W.cols());
    } else {
        require_hermitian(a, 1e-12, "GateProblem(A)");
        if (a.rows() != W.rows()) throw std::invalid_argument("GateProblem: A dimension mismatch");
        A = std::move(a);
    }
    UnitaryEig we = eig_unitary(W);
    phases = std::move(we.phases);
    frame = std::move(we.frame);
    theta0 = phases(0);  // modes are ordered by increasing cos θ

    UnitaryEig ke = eig_unitary((W.adjoint() * U0).eval());
    k_phases = std::move(ke.phases);
    k_frame = std::move(ke.frame);
}

bool GateProblem::identity_weight(double tol) const {
    return (A - Matrix::Identity(A.rows(), A.cols())).norm() <= tol;
}

// ------------------------------------------------------------- objectives --

double phi1(const RealVector& x, const Spectrum& spectrum) {
    if (x.size() != spectrum.values.size()) {
        throw std::invalid_argument("phi1: dimension mismatch");
    }
    return spectrum.values.dot(x);
}

double phi2(const Matrix& u, const Matrix& w, const Matrix& a) {
    if (u.rows() != w.rows() || a.rows() != w.rows()) {
        throw std::invalid_argument("phi2: dimension mismatch");
    }
    return (a * w.adjoint() * u).trace().real();
}

double phi2(const Matrix& u, const GateProblem& p) { return phi2(u, p.W, p.A); }

// ------------------------------------------------------------ flow fields --

Matrix observable_flow_rhs(const Matrix& u, const Matrix& rho0, const Matrix& theta) {
    return -u * commutator(rho0, (u.adjoint() * theta * u).eval());
}

Matrix gate_flow_rhs(const Matrix& uprime, const Matrix& a) {
    return a - uprime * a * uprime;
}

RealVector replicator_rhs(const RealVector& x, const RealVector& lambda) {
    const double mean = lambda.dot(x);
    return 2.0 * x.cwiseProduct((lambda.array() - mean).matrix());
}

Matrix double_bracket_rhs(const Matrix& rho, const Matrix& theta) {
    return commutator(rho, commutator(rho, theta).eval());
}

// -------------------------------------------------------------- distances --

double observable_distance(const RealVector& x, int k) {
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double t = (i < k) ? 1.0 / k : 0.0;
        d2 += (x(i) - t) * (x(i) - t);
    }
    return std::sqrt(d2);
}

double gate_distance(const Matrix& uprime) {
    return (uprime - Matrix::Identity(uprime.rows(), uprime.cols())).norm();
}

// ---------------------------------------------------------- closed forms --

RealVector analytic_x(double s, const ObservableProblem& p) {
    const RealVector& lam = p.spectrum.values;
    const int n = p.dim();
    // Shift by the largest exponent over the supported entries; unsupported
    // entries stay exactly zero (0·e^{huge} must not become NaN).
    double shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
        if (p.x0(i) > 0.0) shift = std::max(shift, 2.0 * s * lam(i));
    RealVector x(n);
    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
        x(i) = (p.x0(i) > 0.0) ? p.x0(i) * std::exp(2.0 * s * lam(i) - shift) : 0.0;
        denom += x(i);
    }
    return x / denom;
}

ComplexVector gate_mode_values(double s, const RealVector& k_phases) {
    const double x = std::tanh(s);
    ComplexVector z(k_phases.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const Complex kappa = std::polar(1.0, -k_phases(k));
        const Complex den = 1.0 + kappa * x;
        // den vanishes only for κ = −1 as tanh s saturates; that mode is a
        // fixed point of the flow, z ≡ κ.
        z(k) = (std::abs(den) < 1e-300) ? kappa : (x + kappa) / den;
    }
    return z;
}

namespace {
// Cancellation amplification of the resolvent I + tanh(s)·K: the summands are
// O(1 + x) while the smallest eigenvalue magnitude is min_k |1 + κ_k x|.
double resolvent_condition(double s, const RealVector& k_phases) {
    const double x = std::tanh(s);
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < k_phases.size(); ++k) {
        lo = std::min(lo, std::abs(1.0 + std::polar(1.0, -k_phases(k)) * x));
    }
    return (lo > 0.0) ? (1.0 + x) / lo : std::numeric_limits<double>::infinity();
}
}  // namespace

Matrix analytic_gate(double s, const GateProblem& p) {
    if (!p.identity_weight()) {
        throw std::invalid_argument("analytic_gate: closed form requires A = I");
    }
    const double cond = resolvent_condition(s, p.k_phases);
    if (!(cond <= 1e12)) {
        std::ostringstream os;
        os << "analytic_gate: resolvent condition number " << cond << " exceeds 1e12 at s = " << s;
        throw std::runtime_error(os.str());
    }
    const int n = p.dim();
    const double x = std::tanh(s);
    const Matrix k = p.W.adjoint() * p.U0;
    const Matrix num = x * Matrix::Identity(n, n) + k;
    const Matrix den = Matrix::Identity(n, n) + x * k;
    // num and den are both rational in K, hence commute: den⁻¹·num = num·den⁻¹.
    return den.partialPivLu().solve(num);
}

double analytic_gate_distance(double s, const GateProblem& p) {
    if (!p.identity_weight()) {
        throw std::invalid_argument("analytic_gate_distance: closed form requires A = I");
    }
    const ComplexVector z = gate_mode_values(s, p.k_phases);
    double d2 = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) d2 += std::norm(z(k) - 1.0);
    return std::sqrt(d2);
}

RealVector populations(const Matrix& u, const ObservableProblem& p) {
    const Matrix rho_t = u * p.rho0_pure() * u.adjoint();
    return (p.spectrum.frame.adjoint() * rho_t * p.spectrum.frame).diagonal().real();
}

// ------------------------------------------------------------- integrators --

SimplexTrajectory integrate_replicator(const ObservableProblem& p, double s_max,
                                       const IntegratorOptions& opts) {
    if (s_max < 0.0) throw std::invalid_argument("integrate_replicator: s_max < 0");
    const RealVector& lam = p.spectrum.values;
    SimplexTrajectory traj;
    RealVector x = p.x0;
    double s = 0.0;

    auto record = [&](const RealVector& state) {
        traj.samples.push_back({s, state, phi1(state, p.spectrum),
                                observable_distance(state, p.multiplicity_k),
                                replicator_rhs(state, lam).norm()});
    };
    record(x);

    while (s < s_max - 1e-15) {
        const RealVector k1 = replicator_rhs(x, lam);
        const double nrm = k1.norm();
        double h_dyn = opts.max_step;
        if (nrm > 0.0) h_dyn = std::min(h_dyn, opts.step_norm_cap / nrm);
        if (h_dyn < opts.min_step) {
            traj.completed = false;
            std::ostringstream os;
            os << "step-size underflow at s = " << s << " (||rhs|| = " << nrm << ")";
            traj.diagnostic = os.str();
            break;
        }
        const double h = std::min(h_dyn, s_max - s);
        const RealVector k2 = replicator_rhs(x + 0.5 * h * k1, lam);
        const RealVector k3 = replicator_rhs(x + 0.5 * h * k2, lam);
        const RealVector k4 = replicator_rhs(x + h * k3, lam);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
        const double residual = simplex_residual(x);
        x = clamp_to_simplex(std::move(x));
        traj.step_stats.push_back({s, h, residual});
        record(x);
    }
    return traj;
}

namespace {

// dexpinv truncated past the double commutator, enough for a 4th-order scheme.
Matrix dexpinv(const Matrix& a, const Matrix& v) {
    const Matrix c1 = commutator(a, v);
    return v - 0.5 * c1 + commutator(a, c1).eval() / 12.0;
}

Matrix skew_part(const Matrix& m) { return 0.5 * (m - m.adjoint()); }

}  // namespace

UnitaryTrajectory integrate_unitary_flow(const Matrix& u0,
                                         const std::function<Matrix(const Matrix&)>& rhs,
                                         double s_max, const IntegratorOptions& opts,
                                         const std::function<double(const Matrix&)>& objective,
                                         const std::function<double(const Matrix&)>& distance) {
    if (s_max < 0.0) throw std::invalid_argument("integrate_unitary_flow: s_max < 0");
    require_unitary(u0, 1e-10, "integrate_unitary_flow(u0)");
    UnitaryTrajectory traj;
    Matrix u = u0;
    double s = 0.0;

    auto body = [&](const Matrix& w) { return skew_part((w.adjoint() * rhs(w)).eval()); };

    auto record = [&](const Matrix& state, double speed) {
        traj.samples.push_back({s, state, objective(state), distance(state), speed});
    };

    Matrix k1 = body(u);
    record(u, k1.norm());

    while (s < s_max - 1e-15) {
        const double nrm = k1.norm();
        double h_dyn = opts.max_step;
        if (nrm > 0.0) h_dyn = std::min(h_dyn, opts.step_norm_cap / nrm);
        if (h_dyn < opts.min_step) {
            traj.completed = false;
            std::ostringstream os;
            os << "step-size underflow at s = " << s << " (||rhs|| = " << nrm << ")";
            traj.diagnostic = os.str();
            break;
        }
        const double h = std::min(h_dyn, s_max - s);
        const Matrix u2 = u * expm_skew((0.5 * h * k1).eval());
        const Matrix k2 = skew_part(dexpinv((0.5 * h * k1).eval(), body(u2)));
        const Matrix u3 = u * expm_skew((0.5 * h * k2).eval());
        const Matrix k3 = skew_part(dexpinv((0.5 * h * k2).eval(), body(u3)));
        const Matrix u4 = u * expm_skew((h * k3).eval());
        const Matrix k4 = skew_part(dexpinv((h * k3).eval(), body(u4)));
        u = u * expm_skew(((h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).eval());
        s += h;
        traj.step_stats.push_back({s, h, unitarity_residual(u)});
        k1 = body(u);
        record(u, k1.norm());
    }
    return traj;
}

UnitaryTrajectory integrate_gate(const GateProblem& p, double s_max,
                                 const IntegratorOptions& opts) {
    const Matrix a = p.A;
    const Matrix w = p.W;
    const Matrix uprime0 = w.adjoint() * p.U0;
    return integrate_unitary_flow(
        uprime0, [a](const Matrix& up) { return gate_flow_rhs(up, a); }, s_max, opts,
        [a](const Matrix& up) { return (a * up).trace().real(); },
        [](const Matrix& up) { return gate_distance(up); });
}

UnitaryTrajectory integrate_observable_unitary(const ObservableProblem& p, double s_max,
                                               const IntegratorOptions& opts) {
    const Matrix theta = p.theta();
    const Matrix rho0 = p.rho0_pure();
    const ObservableProblem prob = p;  // captured by value for the callbacks
    return integrate_unitary_flow(
        Matrix::Identity(p.dim(), p.dim()),
        [rho0, theta](const Matrix& u) { return observable_flow_rhs(u, rho0, theta); }, s_max,
        opts, [prob](const Matrix& u) { return phi1(populations(u, prob), prob.spectrum); },
        [prob](const Matrix& u) {
            return observable_distance(populations(u, prob), prob.multiplicity_k);
        });
}

UnitaryTrajectory integrate_double_bracket(const Matrix& rho0, const Matrix& theta,
                                           double s_max, const IntegratorOptions& opts) {
    require_hermitian(rho0, 1e-12, "integrate_double_bracket(rho0)");
    require_hermitian(theta, 1e-12, "integrate_double_bracket(theta)");
    if (std::abs(rho0.trace().real() - 1.0) > 1e-10) {
        throw std::invalid_argument("integrate_double_bracket: Tr(rho0) must be 1");
    }
    const Spectrum rho_spec = eigh(rho0);
    if (rho_spec.values.minCoeff() < -1e-10) {
        throw std::invalid_argument("integrate_double_bracket: rho0 not positive semidefinite");
    }
    // Limit point: eigenvalues of ρ0 sorted descending along Θ's descending frame.
    const Spectrum theta_spec = eigh(theta);
    const Matrix rho_inf =
        theta_spec.frame * rho_spec.values.asDiagonal() * theta_spec.frame.adjoint();

    auto rho_of = [rho0](const Matrix& v) { return (v * rho0 * v.adjoint()).eval(); };
    UnitaryTrajectory traj = integrate_unitary_flow(
        Matrix::Identity(rho0.rows(), rho0.cols()),
        [rho0, theta, rho_of](const Matrix& v) {
            return (-commutator(rho_of(v), theta) * v).eval();
        },
        s_max, opts,
        [rho0, theta, rho_of](const Matrix& v) { return (rho_of(v) * theta).trace().real(); },
        [rho0, rho_inf, rho_of](const Matrix& v) { return (rho_of(v) - rho_inf).norm(); });

    // Expose ρ(s) rather than the lifting unitary; speed is the ρ-path speed.
    for (auto& sample : traj.samples) {
        sample.state = rho_of(sample.state);
        sample.speed = double_bracket_rhs(sample.state, theta).norm();
    }
    return traj;
}

}  // namespace kinflow
