#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/oracles.hpp"
#include "twotone/params.hpp"

using namespace twotone;

TEST_CASE("published device values validate cleanly") {
    DriveConfig d;
    d.np_minus = 9000.0;
    d.np_plus = 4500.0;
    BathOccupations b;
    const Bundle bundle = make_bundle(oracles::device_system(), d, b);
    REQUIRE(bundle.system.resolved_sideband());
    // stored x_zp is recomputed from the mass and self-consistent to 1e-12
    const double ref = std::sqrt(hbar / (2.0 * bundle.system.mass * bundle.system.omega_m));
    REQUIRE(bundle.system.x_zp == Catch::Approx(ref).epsilon(1e-12));
}

TEST_CASE("port sum mismatch is flagged with the offending field") {
    auto s = oracles::device_system();
    s.kappa_i = two_pi * 40e3;  // breaks kappa_l + kappa_r + kappa_i = kappa
    const auto issues = validate(s, {}, {});
    REQUIRE(issues.size() == 1);
    REQUIRE(issues[0].code == ValidationIssue::Code::PortSumMismatch);
    REQUIRE(issues[0].field == "kappa");
    REQUIRE_THROWS_AS(make_bundle(s, {}, {}), ValidationError);
}

TEST_CASE("negative occupation is flagged") {
    BathOccupations b;
    b.n_m_th = -0.1;
    const auto issues = validate(oracles::device_system(), {}, b);
    REQUIRE(issues.size() == 1);
    REQUIRE(issues[0].code == ValidationIssue::Code::OccupationNegative);
    REQUIRE(issues[0].field == "n_m_th");
}

TEST_CASE("negative rate names the field") {
    auto s = oracles::device_system();
    s.gamma_m = -1.0;
    const auto issues = validate(s, {}, {});
    bool found = false;
    for (const auto& i : issues)
        if (i.code == ValidationIssue::Code::NegativeRate && i.field == "gamma_m") found = true;
    REQUIRE(found);
}

TEST_CASE("per-port occupations define the weighted cavity occupation") {
    BathOccupations b;
    b.per_port = {{1.0, 2.0, 6.0}};
    const Bundle bundle = make_bundle(oracles::device_system(), {}, b);
    const auto& s = bundle.system;
    const double expected = (s.kappa_l * 1.0 + s.kappa_r * 2.0 + s.kappa_i * 6.0) / s.kappa;
    REQUIRE(bundle.baths.n_c_th == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("derived couplings: no blue pump") {
    const Bundle b = oracles::device_bundle(9000.0, 0.0);
    REQUIRE(b.couplings.squeeze_r);
    REQUIRE(*b.couplings.squeeze_r == 0.0);
    REQUIRE(b.couplings.bogoliubov_g);
    REQUIRE(*b.couplings.bogoliubov_g == Catch::Approx(b.couplings.g_minus).epsilon(1e-15));
}

TEST_CASE("derived couplings at the published weak-squeezing point") {
    const Bundle b = oracles::device_bundle(9000.0, 4500.0);
    REQUIRE(b.couplings.squeeze_r);
    REQUIRE(*b.couplings.squeeze_r == Catch::Approx(std::atanh(std::sqrt(0.5))).epsilon(1e-12));
    REQUIRE(*b.couplings.squeeze_r == Catch::Approx(0.881373587019543).epsilon(1e-12));
    REQUIRE(b.couplings.gamma_eff);
    REQUIRE(*b.couplings.gamma_eff == Catch::Approx(two_pi * 929.8181818182).epsilon(1e-9));
}

TEST_CASE("r undefined (not an error) when the blue pump dominates") {
    const Bundle b = oracles::device_bundle(4500.0, 9000.0);
    REQUIRE_FALSE(b.couplings.squeeze_r);
    REQUIRE_FALSE(b.couplings.bogoliubov_g);
    REQUIRE_FALSE(b.couplings.gamma_eff);
    REQUIRE(b.couplings.gamma_opt_minus > 0.0);  // chi-matrix quantities still defined
}

TEST_CASE("squeezing identity e^{-2r} = (1-sqrt(rho))/(1+sqrt(rho))") {
    PhiloxEngine rng(21);
    for (int k = 0; k < 200; ++k) {
        const double rho = rng.next_double() * 0.999;
        const Bundle b = oracles::device_bundle(12000.0, 12000.0 * rho);
        REQUIRE(b.couplings.squeeze_r);
        const double lhs = std::exp(-2.0 * *b.couplings.squeeze_r);
        const double rhs = (1.0 - std::sqrt(rho)) / (1.0 + std::sqrt(rho));
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("rate identities") {
    oracles::BundleSampler sampler(99);
    for (int k = 0; k < 100; ++k) {
        const Bundle b = sampler.zero_detuning();
        const auto& c = b.couplings;
        REQUIRE(c.gamma_eff);
        REQUIRE(*c.gamma_eff >= b.system.gamma_m);
        const double g2 = *c.bogoliubov_g * *c.bogoliubov_g;
        const double lhs = c.gamma_opt_minus * c.gamma_opt_plus;
        const double rhs = std::pow(4.0 * g2 / b.system.kappa, 2);
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("unit normalization is idempotent") {
    RawParams raw;
    raw.unit = FreqUnit::hertz;
    raw.system = oracles::device_system();  // pretend these numbers are Hz
    raw.drive.cavity_detuning = 160e3;
    raw.drive.lambda_par = 1.3e3;
    const RawParams once = normalized(raw);
    const RawParams twice = normalized(once);
    REQUIRE(once.unit == FreqUnit::angular);
    REQUIRE(twice.system.kappa == once.system.kappa);
    REQUIRE(twice.drive.cavity_detuning == once.drive.cavity_detuning);
    REQUIRE(twice.drive.lambda_par == once.drive.lambda_par);
    REQUIRE(once.system.kappa == Catch::Approx(two_pi * raw.system.kappa).epsilon(1e-15));
}

TEST_CASE("pump strength from transmitted power and calibration slope") {
    const double g0 = two_pi * 130.0;
    const double a_minus = 7.49e17;
    const double p = 2e-13;
    const double np = photon_number_from_power(p, a_minus, g0);
    // G^2 = a P by construction
    REQUIRE(g0 * g0 * np == Catch::Approx(a_minus * p).epsilon(1e-14));
    REQUIRE_THROWS_AS(photon_number_from_power(-1e-15, a_minus, g0), NegativePower);
}

TEST_CASE("angles are wrapped into (-pi, pi]") {
    DriveConfig d;
    d.np_minus = 100.0;
    d.phi = 5.0 * two_pi / 2.0;  // 5 pi -> pi
    d.psi = -two_pi / 2.0;       // -pi  -> pi
    const Bundle b = make_bundle(oracles::device_system(), d, {});
    REQUIRE(b.drive.phi == Catch::Approx(two_pi / 2.0).margin(1e-12));
    REQUIRE(b.drive.psi == Catch::Approx(two_pi / 2.0).margin(1e-12));
}

TEST_CASE("heating model is linear in the pump ratio") {
    const HeatingModel h{0.3, 2.5};
    REQUIRE(h.at_ratio(0.0) == 0.3);
    REQUIRE(h.at_ratio(0.4) == Catch::Approx(0.3 + 1.0).epsilon(1e-15));
}
