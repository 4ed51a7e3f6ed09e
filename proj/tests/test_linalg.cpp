#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>

#include "twotone/linalg.hpp"
#include "twotone/rng.hpp"

using namespace twotone;

namespace {

Mat4 random_mat4(PhiloxEngine& rng, double scale) {
    Mat4 m;
    for (auto& x : m.a) x = cplx(scale * (rng.next_double() - 0.5), scale * (rng.next_double() - 0.5));
    return m;
}

}  // namespace

TEST_CASE("4x4 complex solve/inverse multiply back to identity") {
    PhiloxEngine rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const double scale = std::pow(10.0, -3.0 + 9.0 * rng.next_double());
        const Mat4 m = random_mat4(rng, scale);
        Mat4 inv;
        try {
            inv = inverse(m);
        } catch (const SingularMatrix&) {
            continue;  // random matrix can be (nearly) singular
        }
        const Mat4 prod = m * inv;
        double err = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                err = std::max(err, std::abs(prod(i, j) - (i == j ? cplx(1.0) : cplx(0.0))));
        REQUIRE(err < 1e-12);
    }
}

TEST_CASE("singular matrix is rejected") {
    Mat4 m;  // rank 1
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = cplx(static_cast<double>((i + 1) * (j + 1)), 0.0);
    REQUIRE_THROWS_AS(inverse(m), SingularMatrix);
}

TEST_CASE("determinant matches eigenvalue product") {
    PhiloxEngine rng(7);
    const Mat4 m = random_mat4(rng, 1.0);
    const auto ev = eigenvalues4(m);
    const cplx prod = ev[0] * ev[1] * ev[2] * ev[3];
    const cplx det = determinant(m);
    REQUIRE(std::abs(prod - det) < 1e-10 * std::max(1.0, std::abs(det)));
    const cplx tr = m(0, 0) + m(1, 1) + m(2, 2) + m(3, 3);
    const cplx sum = ev[0] + ev[1] + ev[2] + ev[3];
    REQUIRE(std::abs(sum - tr) < 1e-12 * std::max(1.0, std::abs(tr)));
}

TEST_CASE("eigenvalues match a LAPACK-computed fixture") {
    // drift matrix assembled from kappa = 2pi 330 kHz, gamma = 2pi 8 Hz,
    // Delta = 2pi 12 kHz, delta = 2pi 1.5 kHz, G- = g0 sqrt(2e4),
    // G+ = g0 sqrt(6e3), lambda = 2pi 900 Hz, psi = 1.1
    const double kappa = two_pi * 330e3, gamma = two_pi * 8.0;
    const double Delta = two_pi * 12e3, delta = two_pi * 1.5e3;
    const double g0 = two_pi * 130.0;
    const double gm = g0 * std::sqrt(2e4), gp = g0 * std::sqrt(6e3);
    const double lam = two_pi * 900.0, psi = 1.1;
    const cplx i(0.0, 1.0);
    const cplx par = 2.0 * i * lam * std::exp(-i * psi);
    Mat4 m;
    m(0, 0) = 0.5 * kappa - i * Delta; m(0, 2) = -i * gm; m(0, 3) = -i * gp;
    m(1, 1) = 0.5 * kappa + i * Delta; m(1, 2) = i * gp; m(1, 3) = i * gm;
    m(2, 0) = -i * gm; m(2, 1) = -i * gp; m(2, 2) = 0.5 * gamma - i * delta; m(2, 3) = par;
    m(3, 0) = i * gp; m(3, 1) = i * gm; m(3, 2) = std::conj(par); m(3, 3) = 0.5 * gamma + i * delta;

    auto ev = eigenvalues4(m);
    std::sort(ev.begin(), ev.end(), [](const cplx& a, const cplx& b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    // frozen from numpy.linalg.eigvals on the same matrix
    const cplx expected[4] = {
        {5.0808110842e+02, 0.0},
        {1.7689470418e+04, 0.0},
        {1.0276519327e+06, -7.5842984261e+04},
        {1.0276519327e+06, +7.5842984261e+04},
    };
    for (int k = 0; k < 4; ++k) {
        CAPTURE(k);
        REQUIRE(std::abs(ev[k].real() - expected[k].real()) <=
                1e-6 * std::abs(expected[3].real()) + 1e-4 * std::abs(expected[k].real()));
        REQUIRE(std::abs(ev[k].imag() - expected[k].imag()) <= 1e-5 * std::abs(expected[3].real()));
    }
    // each reported eigenvalue actually annihilates det(M - s I)
    for (const cplx& s : ev) {
        Mat4 shifted = m;
        for (int d = 0; d < 4; ++d) shifted(d, d) -= s;
        REQUIRE(std::abs(determinant(shifted)) <
                1e-8 * std::pow(std::abs(ev[3]), 4.0));
    }
}

TEST_CASE("matrix exponential reproduces closed forms") {
    SECTION("diagonal decay") {
        SqMat<double, 4> a;
        a(0, 0) = -2.0; a(1, 1) = -0.5; a(2, 2) = 0.3; a(3, 3) = -7.0;
        const auto e = expm(a);
        for (int k = 0; k < 4; ++k)
            REQUIRE(e(k, k) == Catch::Approx(std::exp(a(k, k))).epsilon(1e-14));
    }
    SECTION("rotation block") {
        SqMat<double, 2> a;
        const double th = 0.77;
        a(0, 1) = -th; a(1, 0) = th;
        const auto e = expm(a);
        REQUIRE(e(0, 0) == Catch::Approx(std::cos(th)).margin(1e-14));
        REQUIRE(e(0, 1) == Catch::Approx(-std::sin(th)).margin(1e-14));
    }
    SECTION("exp(A)exp(-A) = I") {
        PhiloxEngine rng(3);
        SqMat<double, 4> a;
        for (auto& x : a.a) x = 4.0 * (rng.next_double() - 0.5);
        SqMat<double, 4> na = a;
        for (auto& x : na.a) x = -x;
        const auto prod = expm(a) * expm(na);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                REQUIRE(prod(i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-11));
    }
    SECTION("scaling-and-squaring path against a squared small step") {
        // exp(A) must equal exp(A/16)^16 evaluated without internal squaring
        SqMat<double, 2> a;
        a(0, 0) = -3.0; a(0, 1) = 2.0; a(1, 0) = 0.5; a(1, 1) = -1.0;
        SqMat<double, 2> small = a;
        for (auto& x : small.a) x /= 16.0;
        auto acc = expm(small);
        for (int k = 0; k < 4; ++k) acc = acc * acc;
        const auto direct = expm(a);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                REQUIRE(direct(i, j) == Catch::Approx(acc(i, j)).margin(1e-13));
    }
}

TEST_CASE("cholesky factor reproduces the matrix") {
    PhiloxEngine rng(5);
    SqMat<double, 4> g;
    for (auto& x : g.a) x = rng.next_double() - 0.3;
    SqMat<double, 4> p;  // G G^T is PSD
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += g(i, k) * g(j, k);
            p(i, j) = s;
        }
    const auto l = cholesky_psd(p);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += l(i, k) * l(j, k);
            REQUIRE(s == Catch::Approx(p(i, j)).margin(1e-12 * std::abs(p(0, 0)) + 1e-14));
        }
}

TEST_CASE("dense solver handles the 16x16 Lyapunov-sized system") {
    PhiloxEngine rng(11);
    const std::size_t n = 16;
    std::vector<double> a(n * n), x_true(n), b(n, 0.0);
    for (auto& v : a) v = rng.next_double() - 0.5;
    for (std::size_t i = 0; i < n; ++i) {
        a[i * n + i] += 4.0;  // keep it comfortably nonsingular
        x_true[i] = rng.next_double() - 0.5;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b[i] += a[i * n + j] * x_true[j];
    const auto x = solve_dense(a, b);
    for (std::size_t i = 0; i < n; ++i)
        REQUIRE(x[i] == Catch::Approx(x_true[i]).margin(1e-11));
}
