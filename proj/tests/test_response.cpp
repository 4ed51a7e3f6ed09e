#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "support/oracles.hpp"
#include "twotone/quadrature.hpp"
#include "twotone/response.hpp"

using namespace twotone;

TEST_CASE("decoupled system has the textbook eigenvalues") {
    const double Delta = two_pi * 40e3, delta = two_pi * 300.0;
    const Bundle b = oracles::device_bundle(0.0, 0.0, 0.0, 0.0, Delta, delta);
    const auto rep = assess_stability(b);
    REQUIRE(rep.stable);
    const auto& s = b.system;
    // {kappa/2 +- i Delta, gamma/2 +- i delta}
    std::array<cplx, 4> expected = {cplx(s.gamma_m / 2, -delta), cplx(s.gamma_m / 2, delta),
                                    cplx(s.kappa / 2, -Delta), cplx(s.kappa / 2, Delta)};
    for (const auto& e : expected) {
        double best = 1e300;
        for (const auto& ev : rep.eigenvalues) best = std::min(best, std::abs(ev - e));
        REQUIRE(best < 1e-6 * s.kappa);
    }
    REQUIRE(rep.margin == Catch::Approx(s.gamma_m / 2).epsilon(1e-9));
}

TEST_CASE("blue-dominated pumping at high cooperativity is unstable") {
    // np+/np- = 1.2 with C- >> 1
    const double np_minus = 4.0e5;
    const Bundle b = oracles::device_bundle(np_minus, 1.2 * np_minus);
    REQUIRE(b.couplings.coop_minus > 100.0);
    const auto rep = assess_stability(b);
    REQUIRE_FALSE(rep.stable);
    REQUIRE_THROWS_AS(output_noise_spectrum(b, default_grid(b, 64)), UnstableParameters);
}

TEST_CASE("pure parametric drive destabilizes at lambda = gamma_m/4") {
    const double gamma = oracles::device_system().gamma_m;
    const double eps = 1e-3 * gamma;
    const Bundle below = oracles::device_bundle(0, 0, 0, 0, 0, 0, gamma / 4.0 - eps, 0.7);
    const Bundle above = oracles::device_bundle(0, 0, 0, 0, 0, 0, gamma / 4.0 + eps, 0.7);
    const auto rep_below = assess_stability(below);
    const auto rep_above = assess_stability(above);
    REQUIRE(rep_below.stable);
    REQUIRE_FALSE(rep_above.stable);
    // mechanical block eigenvalues gamma/2 -+ 2 lambda
    REQUIRE(rep_below.margin ==
            Catch::Approx(gamma / 2.0 - 2.0 * below.drive.lambda_par).epsilon(1e-6));
}

TEST_CASE("chi multiplies back to the identity on random stable bundles") {
    oracles::BundleSampler sampler(4);
    for (int trial = 0; trial < 25; ++trial) {
        const Bundle b = sampler.general(trial % 2 == 1);
        PhiloxEngine rng(100 + trial);
        for (int k = 0; k < 8; ++k) {
            const double w = (rng.next_double() - 0.5) * 4.0 * b.system.kappa;
            const Mat4 direct = chi_inverse_matrix(b, w);
            const Mat4 x = chi(b, w);
            const Mat4 prod = direct * x;
            double scale = 0.0, err = 0.0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    scale = std::max(scale, std::abs(prod(i, j)));
                    err = std::max(err, std::abs(prod(i, j) - (i == j ? cplx(1) : cplx(0))));
                }
            REQUIRE(err < 1e-12 * std::max(scale, 1.0));
        }
    }
}

TEST_CASE("bare cavity susceptibility") {
    const double Delta = two_pi * 80e3;
    const Bundle b = oracles::device_bundle(0, 0, 0, 0, Delta);
    const double w = two_pi * 25e3;
    const Mat4 x = chi(b, w);
    const cplx expected = 1.0 / (b.system.kappa / 2.0 - cplx(0, 1) * (w + Delta));
    REQUIRE(std::abs(x(0, 0) - expected) < 1e-15 * std::abs(expected));
    for (int i = 0; i < 2; ++i)
        for (int j = 2; j < 4; ++j) {
            REQUIRE(std::abs(x(i, j)) == 0.0);
            REQUIRE(std::abs(x(j, i)) == 0.0);
        }
}

TEST_CASE("chi conjugation symmetry under d <-> d^dag row/col swap") {
    oracles::BundleSampler sampler(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Bundle b = sampler.general(true);
        PhiloxEngine rng(300 + trial);
        const double w = (rng.next_double() - 0.3) * 2.0 * b.system.kappa;
        const Mat4 xp = chi(b, w);
        const Mat4 xm = chi(b, -w);
        const double scale = std::abs(xp(0, 0)) + std::abs(xp(2, 2));
        REQUIRE(std::abs(xm(1, 1) - std::conj(xp(0, 0))) < 1e-12 * scale);
        REQUIRE(std::abs(xm(1, 0) - std::conj(xp(0, 1))) < 1e-12 * scale);
        REQUIRE(std::abs(xm(3, 2) - std::conj(xp(2, 3))) < 1e-12 * scale);
        REQUIRE(std::abs(xm(3, 1) - std::conj(xp(2, 0))) < 1e-12 * scale);
    }
}

TEST_CASE("resonant red-pump block is symmetric in (d, b)") {
    const Bundle b = oracles::device_bundle(5000.0, 2000.0);  // Delta = delta = 0, lambda = 0
    const double w = two_pi * 12e3;
    const Mat4 x = chi(b, w);
    REQUIRE(std::abs(x(0, 2) - x(2, 0)) < 1e-14 * std::abs(x(0, 2)));
}

TEST_CASE("bare-cavity transmission peaks at w = -Delta with 2 sqrt(kL kR)/kappa") {
    const double Delta = two_pi * 60e3;
    const Bundle b = oracles::device_bundle(0, 0, 0, 0, Delta);
    const auto grid = linspace(-Delta - two_pi * 5e3, -Delta + two_pi * 5e3, 4001);
    const auto t = transmission(b, grid);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs(t.value[i]) > std::abs(t.value[peak])) peak = i;
    REQUIRE(t.freq[peak] == Catch::Approx(-Delta).margin(two_pi * 10.0));
    const double tmax = 2.0 * std::sqrt(b.system.kappa_l * b.system.kappa_r) / b.system.kappa;
    REQUIRE(std::abs(t.value[peak]) == Catch::Approx(tmax).epsilon(1e-6));
}

TEST_CASE("transmission matches the closed form at delta = 0") {
    oracles::BundleSampler sampler(8);
    for (int trial = 0; trial < 10; ++trial) {
        Bundle b = sampler.zero_detuning();
        b.drive.cavity_detuning = (sampler.uniform(-0.4, 0.4)) * b.system.kappa;
        b.couplings = derive_couplings(b.system, b.drive);
        const auto grid = default_grid(b, 512);
        const auto t = transmission(b, grid);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const cplx ref = oracles::transmission_closed_form(b, t.freq[i]);
            REQUIRE(std::abs(t.value[i] - ref) <= 1e-10 * std::abs(ref) + 1e-18);
        }
    }
}

TEST_CASE("passive transmission magnitude stays at or below one") {
    oracles::BundleSampler sampler(12);
    for (int trial = 0; trial < 10; ++trial) {
        Bundle b = sampler.zero_detuning();
        b.drive.np_plus = 0.0;  // passive: no blue pump
        b.drive.cavity_detuning = sampler.uniform(-0.5, 0.5) * b.system.kappa;
        b.couplings = derive_couplings(b.system, b.drive);
        const auto t = transmission(b, default_grid(b, 2048));
        for (const auto& v : t.value) REQUIRE(std::abs(v) <= 1.0 + 1e-12);
    }
}

TEST_CASE("transmission window width equals Gamma_eff") {
    // red pump only, Delta = 0: interference window of width Gamma_eff at w = 0
    auto sys = oracles::device_system();
    DriveConfig d;
    const double target_geff = two_pi * 200.0;  // narrow vs kappa
    const double g2 = (target_geff - sys.gamma_m) * sys.kappa / 4.0;
    d.np_minus = g2 / (sys.g0 * sys.g0);
    const Bundle b = make_bundle(sys, d, {});
    REQUIRE(*b.couplings.gamma_eff == Catch::Approx(target_geff).epsilon(1e-12));

    const double geff = *b.couplings.gamma_eff;
    const auto grid = linspace(-6.0 * geff, 6.0 * geff, 4001);
    const auto t = transmission(b, grid);
    Spectrum dip;
    dip.freq = t.freq;
    dip.value.resize(t.size());
    double base = 0.0;
    for (const auto& v : t.value) base = std::max(base, std::norm(v));
    for (std::size_t i = 0; i < t.size(); ++i) dip.value[i] = base - std::norm(t.value[i]);
    const FitResult fit = fit_lorentzian(dip);
    REQUIRE(fit.value("fwhm") == Catch::Approx(geff).epsilon(0.01));
    REQUIRE(fit.value("center") == Catch::Approx(0.0).margin(0.02 * geff));
}

TEST_CASE("vacuum in, vacuum out") {
    const Bundle b = oracles::device_bundle(8000.0, 0.0, 0.0, 0.0, two_pi * 20e3, two_pi * 500.0);
    const auto noise = output_noise_spectrum(b, default_grid(b, 256));
    for (std::size_t i = 0; i < noise.device_referred.size(); ++i) {
        REQUIRE(noise.device_referred.value[i] == 0.0);
        REQUIRE(noise.output.value[i] == 0.5);
    }
}

TEST_CASE("output noise matches the closed form at delta = 0") {
    oracles::BundleSampler sampler(23);
    for (int trial = 0; trial < 10; ++trial) {
        Bundle b = sampler.zero_detuning();
        b.drive.cavity_detuning = sampler.uniform(-0.4, 0.4) * b.system.kappa;
        b.couplings = derive_couplings(b.system, b.drive);
        const auto grid = default_grid(b, 512);
        const auto noise = output_noise_spectrum(b, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double ref = oracles::output_noise_closed_form(b, grid[i]);
            REQUIRE(noise.device_referred.value[i] ==
                    Catch::Approx(ref).epsilon(1e-10).margin(1e-300));
        }
    }
}

TEST_CASE("detector-side noise floor is half a quantum") {
    oracles::BundleSampler sampler(31);
    for (int trial = 0; trial < 8; ++trial) {
        const Bundle b = sampler.general(trial % 2 == 0);
        const auto noise = output_noise_spectrum(b, default_grid(b, 1024));
        for (double v : noise.output.value) REQUIRE(v >= 0.5);
        for (double v : noise.device_referred.value) REQUIRE(v >= 0.0);
    }
}

TEST_CASE("noise spectrum is even at zero detunings") {
    const Bundle b = oracles::device_bundle(9000.0, 4500.0, 0.7, 40.0);
    const double geff = *b.couplings.gamma_eff;
    for (double w : {0.1 * geff, geff, 5.0 * geff, 0.3 * b.system.kappa}) {
        REQUIRE(output_noise_at(b, w) == Catch::Approx(output_noise_at(b, -w)).epsilon(1e-12));
    }
}

TEST_CASE("mechanical sideband area grows linearly with the bath occupation") {
    auto area_at = [](double n_m) {
        const Bundle b = oracles::device_bundle(2000.0, 0.0, 0.0, n_m);
        const double geff = *b.couplings.gamma_eff;
        const auto grid = linspace(-30.0 * geff, 30.0 * geff, 6001);
        const auto noise = output_noise_spectrum(b, grid);
        double area = 0.0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i)
            area += 0.5 * (noise.device_referred.value[i] + noise.device_referred.value[i + 1]) *
                    (grid[i + 1] - grid[i]);
        return area;
    };
    std::vector<std::pair<double, double>> pts;
    for (double n : {5.0, 10.0, 20.0, 40.0, 80.0}) pts.emplace_back(n, area_at(n));
    const FitResult line = fit_linear_calibration(pts, true);
    double ss_tot = 0.0, mean = 0.0;
    for (const auto& [x, y] : pts) mean += y / pts.size();
    for (const auto& [x, y] : pts) ss_tot += (y - mean) * (y - mean);
    const double r2 = 1.0 - line.rss / ss_tot;
    REQUIRE(r2 > 0.999);
}

TEST_CASE("grid evaluation equals independent per-frequency recomputation") {
    const Bundle b = oracles::device_bundle(9000.0, 4500.0, 0.5, 30.0);
    const auto grid = default_grid(b, 257);
    const auto t = transmission(b, grid);
    const auto noise = output_noise_spectrum(b, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(t.value[i] == transmission_at(b, grid[i]));
        REQUIRE(noise.device_referred.value[i] == output_noise_at(b, grid[i]));
    }
}
