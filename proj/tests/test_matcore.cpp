#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kinflow/matcore.hpp"
#include "kinflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace kinflow;

namespace {

constexpr double kPi = std::numbers::pi;

Matrix pauli_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Matrix pauli_y() {
    Matrix m(2, 2);
    m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
    return m;
}

// Test-only oracle: plain Taylor series of exp(M), valid for moderate norms.
Matrix expm_taylor(const Matrix& m, int terms = 60) {
    Matrix acc = Matrix::Identity(m.rows(), m.cols());
    Matrix term = acc;
    for (int k = 1; k <= terms; ++k) {
        term = (term * m / static_cast<double>(k)).eval();
        acc += term;
    }
    return acc;
}

Matrix random_anti_hermitian(int n, Rng& rng) {
    const Matrix h = sample_gue_hermitian(n, rng);
    return Complex(0, 1) * h;
}

// Phases compared as multisets on the circle (θ = ±π identified).
bool phase_multisets_match(RealVector a, RealVector b, double tol) {
    if (a.size() != b.size()) return false;
    std::vector<double> va(a.data(), a.data() + a.size());
    std::vector<double> vb(b.data(), b.data() + b.size());
    for (auto& t : va)
        if (t <= -kPi + 1e-15) t += 2.0 * kPi;
    for (auto& t : vb)
        if (t <= -kPi + 1e-15) t += 2.0 * kPi;
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    for (std::size_t i = 0; i < va.size(); ++i) {
        double d = std::abs(va[i] - vb[i]);
        d = std::min(d, std::abs(2.0 * kPi - d));
        if (d > tol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("eigh: diagonal input") {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 1) = 1.0;
    const Spectrum sp = eigh(m);
    CHECK(sp.values(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sp.values(1) == doctest::Approx(0.0).epsilon(1e-14));
    // frame is a permutation of identity columns
    CHECK(std::abs(sp.frame.col(0)(1)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(sp.frame.col(1)(0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((sp.reconstruct() - m).norm() < 1e-14);
}

TEST_CASE("eigh: Pauli-x spectrum") {
    const Spectrum sp = eigh(pauli_x());
    CHECK(sp.values(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sp.values(1) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("eigh: random reconstruction residual") {
    Rng rng(101);
    const Matrix m = sample_gue_hermitian(8, rng);
    const Spectrum sp = eigh(m);
    CHECK((sp.reconstruct() - m).norm() <= 1e-10 * m.norm());
    for (int i = 0; i + 1 < 8; ++i) CHECK(sp.values(i) >= sp.values(i + 1));
}

TEST_CASE("eigh: reconstruct identity for all dimensions 2..64") {
    Rng rng(2024);
    for (int n = 2; n <= 64; ++n) {
        const Matrix m = sample_gue_hermitian(n, rng);
        const Spectrum sp = eigh(m);
        CHECK((sp.reconstruct() - m).norm() <= 1e-10 * m.norm());
    }
}

TEST_CASE("eigh: rejects non-Hermitian input with residual diagnostic") {
    Matrix m(2, 2);
    m << 0, 1, 0, 0;
    CHECK_THROWS_WITH_AS(eigh(m), doctest::Contains("non-Hermitian"), std::invalid_argument);
}

TEST_CASE("Spectrum: top multiplicity under the degeneracy tolerance") {
    RealVector v(4);
    v << 1.0, 1.0 - 1e-10, 0.5, 0.2;
    const Spectrum sp = Spectrum::from_values(v);
    CHECK(sp.top_multiplicity() == 2);
    CHECK(sp.top_gap() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("eig_unitary: identity has all-zero phases") {
    const UnitaryEig ue = eig_unitary(Matrix::Identity(3, 3));
    for (int k = 0; k < 3; ++k) CHECK(std::abs(ue.phases(k)) < 1e-12);
}

TEST_CASE("eig_unitary: diag(-1, 1) phases are {pi, 0} with the +pi branch") {
    Matrix w = Matrix::Identity(2, 2);
    w(0, 0) = -1.0;
    const UnitaryEig ue = eig_unitary(w);
    std::vector<double> ph{ue.phases(0), ue.phases(1)};
    std::sort(ph.begin(), ph.end());
    CHECK(ph[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ph[1] == doctest::Approx(kPi).epsilon(1e-12));  // +pi, never -pi
}

TEST_CASE("eig_unitary: Haar 6x6 reconstruction") {
    const Matrix w = sample_haar_unitary(6, 77);
    const UnitaryEig ue = eig_unitary(w);
    ComplexVector lam(6);
    for (int k = 0; k < 6; ++k) lam(k) = std::polar(1.0, -ue.phases(k));
    CHECK((ue.frame.adjoint() * lam.asDiagonal() * ue.frame - w).norm() <= 1e-9);
    // modes ordered by increasing cos
    for (int k = 0; k + 1 < 6; ++k) {
        CHECK(std::cos(ue.phases(k)) <= std::cos(ue.phases(k + 1)) + 1e-12);
    }
}

TEST_CASE("eig_unitary: phases of W and W-dagger negate as multisets") {
    for (std::uint64_t seed : {11, 12, 13, 14}) {
        const Matrix w = sample_haar_unitary(5, seed);
        const UnitaryEig a = eig_unitary(w);
        const UnitaryEig b = eig_unitary(w.adjoint().eval());
        CHECK(phase_multisets_match(a.phases, (-b.phases).eval(), 1e-9));
    }
}

TEST_CASE("eig_unitary: joint cos-degeneracy split by the skew part") {
    // diag(i, -i): cos θ identically zero, only H2 separates the modes.
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = Complex(0, 1);
    w(1, 1) = Complex(0, -1);
    const UnitaryEig ue = eig_unitary(w);
    ComplexVector lam(2);
    for (int k = 0; k < 2; ++k) lam(k) = std::polar(1.0, -ue.phases(k));
    CHECK((ue.frame.adjoint() * lam.asDiagonal() * ue.frame - w).norm() <= 1e-12);
    RealVector expected(2);
    expected << kPi / 2, -kPi / 2;
    CHECK(phase_multisets_match(ue.phases, expected, 1e-12));
}

TEST_CASE("eig_unitary: near-degenerate cos pair stays within tolerance") {
    // +θ/−θ pair with cos values split by ~1e-9: exercises the cluster path.
    Rng rng(5150);
    const Matrix v = sample_haar_unitary(4, rng);
    RealVector th(4);
    th << 1.0, -1.0 - 1e-9, 2.5, 0.3;
    ComplexVector lam(4);
    for (int k = 0; k < 4; ++k) lam(k) = std::polar(1.0, -th(k));
    const Matrix w = v.adjoint() * lam.asDiagonal() * v;
    const UnitaryEig ue = eig_unitary(w);
    ComplexVector rec(4);
    for (int k = 0; k < 4; ++k) rec(k) = std::polar(1.0, -ue.phases(k));
    CHECK((ue.frame.adjoint() * rec.asDiagonal() * ue.frame - w).norm() <= 1e-9);
    CHECK(phase_multisets_match(ue.phases, th, 1e-8));
}

TEST_CASE("eig_unitary: rejects non-unitary input") {
    CHECK_THROWS_AS(eig_unitary(2.0 * Matrix::Identity(2, 2)), std::invalid_argument);
}

TEST_CASE("expm_skew: zero maps to identity") {
    CHECK((expm_skew(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-15);
}

TEST_CASE("expm_skew: scalar phase i*pi*I gives -I") {
    const Matrix omega = Complex(0, kPi) * Matrix::Identity(2, 2);
    CHECK((expm_skew(omega) + Matrix::Identity(2, 2)).norm() < 1e-13);
}

TEST_CASE("expm_skew: matches the Taylor oracle on i(pi/2)*pauli_y") {
    const Matrix omega = Complex(0, kPi / 2) * pauli_y();
    const Matrix u = expm_skew(omega);
    CHECK((u - expm_taylor(omega)).norm() <= 1e-12);
    CHECK(unitarity_residual(u) <= 1e-12);
}

TEST_CASE("expm_skew: exp(O) exp(-O) = I for random inputs up to norm 10") {
    Rng rng(909);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform() * 5);
        Matrix omega = random_anti_hermitian(n, rng);
        omega *= 10.0 * rng.uniform() / omega.norm();
        CHECK((expm_skew(omega) * expm_skew((-omega).eval()) - Matrix::Identity(n, n)).norm() <=
              1e-11);
    }
}

TEST_CASE("expm_skew: rejects non-anti-Hermitian input") {
    CHECK_THROWS_AS(expm_skew(Matrix::Identity(2, 2)), std::invalid_argument);
}

TEST_CASE("sample: determinism is bit-identical for equal seeds") {
    const Matrix a = sample_haar_unitary(4, 42);
    const Matrix b = sample_haar_unitary(4, 42);
    CHECK(a == b);
    const Matrix g1 = sample_gue_hermitian(5, 43);
    const Matrix g2 = sample_gue_hermitian(5, 43);
    CHECK(g1 == g2);
    const Spectrum s1 = sample_spectrum_uniform(6, 0.0, 1.0, 44);
    const Spectrum s2 = sample_spectrum_uniform(6, 0.0, 1.0, 44);
    CHECK(s1.values == s2.values);
}

TEST_CASE("sample: haar unitarity and gue hermiticity") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix u = sample_haar_unitary(4, rng);
        CHECK(unitarity_residual(u) <= 1e-10);
    }
    const Matrix g = sample_gue_hermitian(6, rng);
    CHECK(hermiticity_residual(g) < 1e-14);
}

TEST_CASE("sample: spectrum values sorted descending within the interval") {
    const Spectrum sp = sample_spectrum_uniform(16, -2.0, 3.0, 99);
    for (int i = 0; i + 1 < 16; ++i) CHECK(sp.values(i) >= sp.values(i + 1));
    CHECK(sp.values.maxCoeff() <= 3.0);
    CHECK(sp.values.minCoeff() >= -2.0);
}

TEST_CASE("sample: zero dimension rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_haar_unitary(0, rng), std::invalid_argument);
}

TEST_CASE("sample: Haar first-column statistics are uniform on the sphere") {
    // For N = 2 the squared modulus |u_11|^2 of a Haar column is Uniform[0,1]
    // and the relative column phase is Uniform[0,2pi); chi-square against 20
    // equal bins at p > 0.01 (critical value 36.191 for 19 dof).
    const int samples = 10000;
    const int bins = 20;
    const double critical = 36.191;
    std::vector<int> mod_hist(bins, 0), phase_hist(bins, 0);
    Rng rng(20240817);
    for (int i = 0; i < samples; ++i) {
        const Matrix u = sample_haar_unitary(2, rng);
        const double p = std::norm(u(0, 0));
        const double ph = std::arg(u(0, 0) * std::conj(u(1, 0))) / (2.0 * kPi) + 0.5;
        mod_hist[std::min(bins - 1, static_cast<int>(p * bins))]++;
        phase_hist[std::min(bins - 1, static_cast<int>(ph * bins))]++;
    }
    auto chi2 = [&](const std::vector<int>& h) {
        const double expected = static_cast<double>(samples) / bins;
        double c = 0.0;
        for (int o : h) c += (o - expected) * (o - expected) / expected;
        return c;
    };
    CHECK(chi2(mod_hist) < critical);
    CHECK(chi2(phase_hist) < critical);
}
