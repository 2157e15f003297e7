#include "kinflow/random.hpp"

#include <algorithm>

namespace kinflow {

namespace {
void require_dim(int n, const char* where) {
    if (n < 1) throw std::invalid_argument(std::string(where) + ": dimension must be >= 1");
}
}  // namespace

Matrix sample_haar_unitary(int n, Rng& rng) {
    require_dim(n, "sample_haar_unitary");
    Matrix g(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = rng.cnormal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) {
        const Complex d = r(j, j);
        const double a = std::abs(d);
        q.col(j) *= (a == 0.0) ? Complex(1.0, 0.0) : d / a;
    }
    return q;
}

Matrix sample_gue_hermitian(int n, Rng& rng) {
    require_dim(n, "sample_gue_hermitian");
    Matrix g(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = rng.cnormal();
    return (g + g.adjoint()) * 0.5;
}

RealVector sample_spectrum_values(int n, double a, double b, Rng& rng) {
    require_dim(n, "sample_spectrum_values");
    if (!(b >= a)) throw std::invalid_argument("sample_spectrum_values: need b >= a");
    RealVector v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform(a, b);
    std::sort(v.data(), v.data() + n, std::greater<double>());
    return v;
}

Matrix sample_haar_unitary(int n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_haar_unitary(n, rng);
}

Matrix sample_gue_hermitian(int n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_gue_hermitian(n, rng);
}

Spectrum sample_spectrum_uniform(int n, double a, double b, std::uint64_t seed) {
    Rng rng(seed);
    return Spectrum::from_values(sample_spectrum_values(n, a, b, rng));
}

}  // namespace kinflow
