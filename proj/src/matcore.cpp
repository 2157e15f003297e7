#include "kinflow/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace kinflow {

void require_square(const Matrix& m, const char* where) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        std::ostringstream os;
        os << where << ": expected nonempty square matrix, got " << m.rows() << "x" << m.cols();
        throw std::invalid_argument(os.str());
    }
}

void require_hermitian(const Matrix& m, double rel_tol, const char* where) {
    require_square(m, where);
    const double res = hermiticity_residual(m);
    if (res > rel_tol * std::max(m.norm(), 1e-300)) {
        std::ostringstream os;
        os << where << ": non-Hermitian input, ||M - M^H||_F = " << res
           << " exceeds " << rel_tol << " * ||M||_F = " << rel_tol * m.norm();
        throw std::invalid_argument(os.str());
    }
}

void require_unitary(const Matrix& u, double tol, const char* where) {
    require_square(u, where);
    const double res = unitarity_residual(u);
    if (res > tol) {
        std::ostringstream os;
        os << where << ": non-unitary input, ||U^H U - I||_F = " << res << " exceeds " << tol;
        throw std::invalid_argument(os.str());
    }
}

int Spectrum::top_multiplicity() const {
    const double tol = degeneracy_tol * std::max(1.0, std::abs(values(0)));
    int k = 1;
    while (k < values.size() && values(0) - values(k) <= tol) ++k;
    return k;
}

double Spectrum::top_gap() const {
    const int k = top_multiplicity();
    if (k >= values.size()) return 0.0;
    return values(0) - values(k);
}

Spectrum Spectrum::from_values(RealVector descending) {
    for (Eigen::Index i = 0; i + 1 < descending.size(); ++i) {
        if (descending(i) < descending(i + 1)) {
            throw std::invalid_argument("Spectrum::from_values: values must be descending");
        }
    }
    Spectrum sp;
    sp.frame = Matrix::Identity(descending.size(), descending.size());
    sp.values = std::move(descending);
    return sp;
}

Spectrum eigh(const Matrix& m) {
    require_hermitian(m, 1e-12, "eigh");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(((m + m.adjoint()) * 0.5).eval());
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigh: eigensolver failed to converge");
    }
    Spectrum sp;
    sp.values = solver.eigenvalues().reverse();
    sp.frame = solver.eigenvectors().rowwise().reverse();
    return sp;
}

namespace {

// Rayleigh phases for a candidate joint eigenbasis of (H1, H2).
RealVector phases_from_basis(const Matrix& basis, const Matrix& h1, const Matrix& h2) {
    const Eigen::Index n = basis.cols();
    RealVector theta(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto v = basis.col(k);
        const double c = (v.adjoint() * h1 * v)(0, 0).real();
        const double ms = (v.adjoint() * h2 * v)(0, 0).real();  // = −sin θ_k
        double t = std::atan2(-ms, c);
        if (t <= -std::numbers::pi) t = std::numbers::pi;  // branch at θ = π kept positive
        theta(k) = t;
    }
    return theta;
}

double reconstruction_residual(const Matrix& basis, const RealVector& theta, const Matrix& w) {
    ComplexVector lam(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) lam(k) = std::polar(1.0, -theta(k));
    return (basis * lam.asDiagonal() * basis.adjoint() - w).norm();
}

}  // namespace

UnitaryEig eig_unitary(const Matrix& w) {
    require_unitary(w, 1e-10, "eig_unitary");
    const Eigen::Index n = w.rows();
    const Matrix h1 = ((w + w.adjoint()) * 0.5).eval();                  // V† diag(cos θ) V
    const Matrix h2 = ((w - w.adjoint()) * Complex(0.0, -0.5)).eval();   // V† diag(−sin θ) V

    Eigen::SelfAdjointEigenSolver<Matrix> solver(h1);
    Matrix basis = solver.eigenvectors();
    const RealVector c = solver.eigenvalues();

    // Split near-degenerate cos θ clusters (±θ pairs land here) using H2.
    const double cluster_tol = 1e-8;
    Eigen::Index lo = 0;
    while (lo < n) {
        Eigen::Index hi = lo + 1;
        while (hi < n && c(hi) - c(hi - 1) <= cluster_tol) ++hi;
        if (hi - lo > 1) {
            const Matrix sub = basis.middleCols(lo, hi - lo);
            Matrix block = (sub.adjoint() * h2 * sub).eval();
            block = ((block + block.adjoint()) * 0.5).eval();
            Eigen::SelfAdjointEigenSolver<Matrix> sub_solver(block);
            basis.middleCols(lo, hi - lo) = sub * sub_solver.eigenvectors();
        }
        lo = hi;
    }

    RealVector theta = phases_from_basis(basis, h1, h2);
    double res = reconstruction_residual(basis, theta, w);

    // Near-joint-degenerate inputs can defeat the two-stage split; a generic
    // real combination H1 + t·H2 is then diagonalized in one shot.
    if (res > 1e-9) {
        for (double t : {0.7310585786300049, 1.3127394696538506, 0.4142135623730951}) {
            Eigen::SelfAdjointEigenSolver<Matrix> joint((h1 + t * h2).eval());
            const RealVector cand_theta = phases_from_basis(joint.eigenvectors(), h1, h2);
            const double cand_res = reconstruction_residual(joint.eigenvectors(), cand_theta, w);
            if (cand_res < res) {
                basis = joint.eigenvectors();
                theta = cand_theta;
                res = cand_res;
            }
            if (res <= 1e-9) break;
        }
    }
    if (res > 1e-9) {
        std::ostringstream os;
        os << "eig_unitary: reconstruction residual " << res << " exceeds 1e-9";
        throw std::runtime_error(os.str());
    }

    // Order modes by increasing cos θ so the worst mode is first.
    std::vector<Eigen::Index> order(n);
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::cos(theta(a)) < std::cos(theta(b));
    });
    UnitaryEig out;
    out.phases.resize(n);
    Matrix sorted(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.phases(i) = theta(order[i]);
        sorted.col(i) = basis.col(order[i]);
    }
    out.frame = sorted.adjoint();  // W = frame† diag(e^{-iθ}) frame
    return out;
}

Matrix expm_skew(const Matrix& omega) {
    require_square(omega, "expm_skew");
    const double res = (omega + omega.adjoint()).norm();
    if (res > 1e-10 * std::max(omega.norm(), 1e-300)) {
        std::ostringstream os;
        os << "expm_skew: non-anti-Hermitian input, ||O + O^H||_F = " << res;
        throw std::invalid_argument(os.str());
    }
    // Ω = iH with H = (Ω − Ω†)/(2i) Hermitian; exp(Ω) = V e^{i d} V†.
    const Matrix h = ((omega - omega.adjoint()) * Complex(0.0, -0.5)).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    ComplexVector ph(omega.rows());
    for (Eigen::Index k = 0; k < ph.size(); ++k) ph(k) = std::polar(1.0, solver.eigenvalues()(k));
    return solver.eigenvectors() * ph.asDiagonal() * solver.eigenvectors().adjoint();
}

}  // namespace kinflow
