// matcore.hpp — complex dense linear-algebra substrate: Hermitian/unitary
// residual checks, spectral decompositions, and skew-Hermitian exponentials.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>

namespace kinflow {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

// Frobenius deviation from Hermitian symmetry; accepts any dense expression.
template <class Derived>
double hermiticity_residual(const Eigen::MatrixBase<Derived>& m) {
    return (m - m.adjoint()).norm();
}

// ‖U†U − I‖_F
template <class Derived>
double unitarity_residual(const Eigen::MatrixBase<Derived>& u) {
    return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).norm();
}

template <class A, class B>
Matrix commutator(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    return a * b - b * a;
}

void require_square(const Matrix& m, const char* where);

// Rejects matrices with ‖M − M†‖_F > rel_tol·‖M‖_F.
void require_hermitian(const Matrix& m, double rel_tol = 1e-12,
                       const char* where = "require_hermitian");

// Rejects matrices with ‖U†U − I‖_F > tol.
void require_unitary(const Matrix& u, double tol = 1e-10,
                     const char* where = "require_unitary");

/// Eigensystem of a Hermitian matrix with eigenvalues stored descending.
/// Columns of `frame` are the eigenvectors: M = frame · diag(values) · frame†.
struct Spectrum {
    RealVector values;
    Matrix frame;
    double degeneracy_tol = 1e-9;

    int dim() const { return static_cast<int>(values.size()); }

    // Multiplicity k of the top eigenvalue: count of values within
    // degeneracy_tol·max(1, |λ1|) of λ1.
    int top_multiplicity() const;

    // Gap λ_(1) − λ_{k+1}; zero when the whole spectrum is degenerate.
    double top_gap() const;

    Matrix reconstruct() const { return frame * values.asDiagonal() * frame.adjoint(); }

    // Synthetic spectrum in its own eigenbasis (identity frame).
    static Spectrum from_values(RealVector descending);
};

// Hermitian eigendecomposition, descending order. Throws std::invalid_argument
// with the measured residual when the input fails the Hermitian tolerance.
Spectrum eigh(const Matrix& m);

/// Eigenphases of a unitary: W = frame† · diag(e^{-iθ_k}) · frame with
/// θ_k ∈ (−π, π] (the θ = π branch is kept at +π). Modes are ordered by
/// increasing cos θ_k, so phases(0) always realizes the minimal cos θ.
struct UnitaryEig {
    RealVector phases;
    Matrix frame;
};

UnitaryEig eig_unitary(const Matrix& w);

// Exact exponential of an anti-Hermitian matrix via the spectral theorem;
// the result is unitary by construction. Rejects Ω with
// ‖Ω + Ω†‖_F > 1e-10·‖Ω‖_F.
Matrix expm_skew(const Matrix& omega);

}  // namespace kinflow
