// random.hpp — deterministic random instances: Haar unitaries, GUE matrices,
// synthetic spectra. mt19937_64 is bit-exact across platforms; the variate
// transforms are spelled out here because the standard distributions are not.
#pragma once

#include "kinflow/matcore.hpp"

#include <cstdint>
#include <numbers>
#include <random>

namespace kinflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Per-instance seed from (study seed, dimension, instance index).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(base ^ 0x243F6A8885A308D3ULL);
    s = splitmix64(s ^ splitmix64(a));
    return splitmix64(s ^ splitmix64(b ^ 0x13198A2E03707344ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log1p(-uniform()));
        const double t = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Standard complex Gaussian, E|z|² = 1.
    Complex cnormal() {
        const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
        const double re = normal();
        const double im = normal();
        return {re * inv_sqrt2, im * inv_sqrt2};
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Haar-distributed unitary: QR of a complex Ginibre matrix with the R-diagonal
// phase correction.
Matrix sample_haar_unitary(int n, Rng& rng);

Matrix sample_gue_hermitian(int n, Rng& rng);

// n i.i.d. uniforms on [a, b], sorted descending.
RealVector sample_spectrum_values(int n, double a, double b, Rng& rng);

// Seed-taking conveniences.
Matrix sample_haar_unitary(int n, std::uint64_t seed);
Matrix sample_gue_hermitian(int n, std::uint64_t seed);
Spectrum sample_spectrum_uniform(int n, double a, double b, std::uint64_t seed);

}  // namespace kinflow
