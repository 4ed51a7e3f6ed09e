#pragma once

// Parameter records for the two-tone driven optomechanical model, validation,
// and the algebraically derived coupling quantities everything else consumes.
// All frequencies and rates are angular (rad/s) internally; plain-Hz external
// values are converted exactly once at the input boundary.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "twotone/constants.hpp"
#include "twotone/errors.hpp"

namespace twotone {

struct SystemParams {
    double omega_m = 0.0;   // mechanical resonance (rad/s)
    double kappa = 0.0;     // total cavity linewidth (rad/s)
    double kappa_l = 0.0;   // left (input) port coupling (rad/s)
    double kappa_r = 0.0;   // right (output) port coupling (rad/s)
    double kappa_i = 0.0;   // internal loss (rad/s)
    double gamma_m = 0.0;   // intrinsic mechanical linewidth (rad/s)
    double g0 = 0.0;        // single-photon coupling (rad/s)
    double x_zp = 0.0;      // zero-point amplitude (m); derived from mass when given
    double mass = 0.0;      // kg; <= 0 means not provided
    std::optional<double> omega_c;  // cavity resonance (rad/s); only used for lab-frame axes

    bool resolved_sideband() const { return omega_m / kappa > 10.0; }
};

struct DriveConfig {
    double cavity_detuning = 0.0;  // Delta: pump-center detuning from cavity resonance (rad/s)
    double mech_detuning = 0.0;    // delta: pump detuning from the mechanical sidebands (rad/s)
    double np_minus = 0.0;         // intracavity photon number, red-detuned pump
    double np_plus = 0.0;          // intracavity photon number, blue-detuned pump
    double phi = 0.0;              // probe phase (rad), stored in (-pi, pi]
    double lambda_par = 0.0;       // mechanical parametric amplitude (rad/s)
    double psi = 0.0;              // parametric phase relative to the pumps (rad)
};

struct BathOccupations {
    double n_c_th = 0.0;  // cavity thermal occupation (quanta)
    double n_m_th = 0.0;  // mechanical bath occupation (quanta)
    std::optional<std::array<double, 3>> per_port;  // {L, R, I}; n_c_th is their kappa-weighted sum
};

struct DerivedCouplings {
    double g_minus = 0.0;          // G- = g0 sqrt(np-)
    double g_plus = 0.0;           // G+ = g0 sqrt(np+)
    std::optional<double> bogoliubov_g;  // curly-G = sqrt(G-^2 - G+^2); absent when G+ > G-
    std::optional<double> squeeze_r;     // r = atanh(G+/G-); absent when G+ >= G-
    double gamma_opt_minus = 0.0;  // 4 (G- - G+)^2 / kappa
    double gamma_opt_plus = 0.0;   // 4 (G- + G+)^2 / kappa
    std::optional<double> gamma_eff;  // Gamma_m + 4 curlyG^2 / kappa
    double coop_minus = 0.0;       // C- = 4 G-^2 / (kappa Gamma_m)
    double coop_plus = 0.0;        // C+ = 4 G+^2 / (kappa Gamma_m)
};

struct ValidationIssue {
    enum class Code {
        NegativeRate,
        PortSumMismatch,
        OccupationNegative,
        ZeroPointMismatch,
        NonFinite,
    };
    Code code;
    std::string field;
    std::string message;
};

class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<ValidationIssue> issues)
        : Error(join(issues)), issues_(std::move(issues)) {}
    const std::vector<ValidationIssue>& issues() const { return issues_; }

  private:
    static std::string join(const std::vector<ValidationIssue>& issues) {
        std::string s = "parameter validation failed:";
        for (const auto& i : issues) s += "\n  [" + i.field + "] " + i.message;
        return s;
    }
    std::vector<ValidationIssue> issues_;
};

// Validated, immutable parameter set. All operations elsewhere take a Bundle;
// they are pure and the record is safe to share across threads.
struct Bundle {
    SystemParams system;
    DriveConfig drive;
    BathOccupations baths;
    DerivedCouplings couplings;
};

inline DerivedCouplings derive_couplings(const SystemParams& s, const DriveConfig& d) {
    DerivedCouplings c;
    c.g_minus = s.g0 * std::sqrt(d.np_minus);
    c.g_plus = s.g0 * std::sqrt(d.np_plus);
    const double g2 = c.g_minus * c.g_minus - c.g_plus * c.g_plus;
    if (g2 >= 0.0) {
        c.bogoliubov_g = std::sqrt(g2);
        c.gamma_eff = s.gamma_m + 4.0 * g2 / s.kappa;
    }
    if (c.g_plus < c.g_minus) c.squeeze_r = std::atanh(c.g_plus / c.g_minus);
    else if (c.g_plus == 0.0 && c.g_minus == 0.0) c.squeeze_r = 0.0;
    const double dm = c.g_minus - c.g_plus;
    const double dp = c.g_minus + c.g_plus;
    c.gamma_opt_minus = 4.0 * dm * dm / s.kappa;
    c.gamma_opt_plus = 4.0 * dp * dp / s.kappa;
    c.coop_minus = 4.0 * c.g_minus * c.g_minus / (s.kappa * s.gamma_m);
    c.coop_plus = 4.0 * c.g_plus * c.g_plus / (s.kappa * s.gamma_m);
    return c;
}

inline std::vector<ValidationIssue> validate(const SystemParams& s, const DriveConfig& d,
                                             const BathOccupations& b) {
    using Code = ValidationIssue::Code;
    std::vector<ValidationIssue> out;
    auto flag = [&](Code c, const std::string& field, const std::string& msg) {
        out.push_back({c, field, msg});
    };
    auto positive_rate = [&](double v, const char* field) {
        if (!std::isfinite(v)) flag(Code::NonFinite, field, "value is not finite");
        else if (v <= 0.0) flag(Code::NegativeRate, field, "rate must be > 0");
    };
    positive_rate(s.omega_m, "omega_m");
    positive_rate(s.kappa, "kappa");
    positive_rate(s.kappa_l, "kappa_l");
    positive_rate(s.kappa_r, "kappa_r");
    positive_rate(s.kappa_i, "kappa_i");
    positive_rate(s.gamma_m, "gamma_m");
    positive_rate(s.g0, "g0");

    const double port_sum = s.kappa_l + s.kappa_r + s.kappa_i;
    if (s.kappa > 0.0 && std::abs(port_sum - s.kappa) > 1e-12 * s.kappa)
        flag(Code::PortSumMismatch, "kappa",
             "kappa_l + kappa_r + kappa_i does not equal kappa");

    if (s.mass > 0.0 && s.x_zp > 0.0) {
        // Published zero-point amplitudes are rounded; allow 2% against the
        // exact sqrt(hbar / (2 m omega_m)) before treating it as an error.
        const double ref = std::sqrt(hbar / (2.0 * s.mass * s.omega_m));
        if (std::abs(s.x_zp - ref) > 2e-2 * ref)
            flag(Code::ZeroPointMismatch, "x_zp",
                 "x_zp inconsistent with sqrt(hbar/(2 m omega_m))");
    } else if (s.mass <= 0.0 && s.x_zp <= 0.0) {
        flag(Code::NegativeRate, "x_zp", "provide x_zp or mass");
    }

    if (d.np_minus < 0.0) flag(Code::OccupationNegative, "np_minus", "photon number must be >= 0");
    if (d.np_plus < 0.0) flag(Code::OccupationNegative, "np_plus", "photon number must be >= 0");
    if (d.lambda_par < 0.0) flag(Code::NegativeRate, "lambda_par", "parametric amplitude must be >= 0");

    if (b.n_c_th < 0.0 && !b.per_port) flag(Code::OccupationNegative, "n_c_th", "occupation must be >= 0");
    if (b.n_m_th < 0.0) flag(Code::OccupationNegative, "n_m_th", "occupation must be >= 0");
    if (b.per_port) {
        const char* names[3] = {"n_l_th", "n_r_th", "n_i_th"};
        for (int i = 0; i < 3; ++i)
            if ((*b.per_port)[i] < 0.0)
                flag(Code::OccupationNegative, names[i], "occupation must be >= 0");
    }
    return out;
}

// Validates and normalizes the three records into an immutable bundle.
// When mass is given the stored x_zp is recomputed from it, so downstream
// code sees an x_zp exactly consistent with omega_m and mass. Per-port bath
// occupations, when present, define n_c_th as their kappa-weighted sum.
inline Bundle make_bundle(SystemParams s, DriveConfig d, BathOccupations b) {
    auto issues = validate(s, d, b);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    if (s.mass > 0.0) s.x_zp = std::sqrt(hbar / (2.0 * s.mass * s.omega_m));
    d.phi = wrap_angle(d.phi);
    d.psi = wrap_angle(d.psi);
    if (b.per_port) {
        const auto& p = *b.per_port;
        b.n_c_th = (s.kappa_l * p[0] + s.kappa_r * p[1] + s.kappa_i * p[2]) / s.kappa;
    }
    Bundle out{s, d, b, derive_couplings(s, d)};
    return out;
}

// Pump strength given as transmitted power times a calibration slope a
// (G^2 = a P) instead of an intracavity photon number.
inline double photon_number_from_power(double power_w, double slope_a, double g0) {
    if (power_w < 0.0) throw NegativePower("transmitted power must be >= 0");
    return slope_a * power_w / (g0 * g0);
}

// Linear pump-ratio heating model for the cavity bath: n_c(rho) = n_c0 + s * rho.
struct HeatingModel {
    double n_c0 = 0.0;
    double slope_per_ratio = 0.0;
    double at_ratio(double rho) const { return n_c0 + slope_per_ratio * rho; }
};

// ---- raw external records (plain Hz / degrees) -----------------------------

enum class FreqUnit { hertz, angular };

// Mirror of SystemParams + DriveConfig as they appear in config files.
// `normalized` converts to angular units exactly once; applying it twice is
// the identity.
struct RawParams {
    FreqUnit unit = FreqUnit::hertz;
    SystemParams system;   // frequency fields in `unit`
    DriveConfig drive;     // detunings/lambda in `unit`; phi/psi already radians
};

inline RawParams normalized(RawParams raw) {
    if (raw.unit == FreqUnit::angular) return raw;
    auto& s = raw.system;
    for (double* f : {&s.omega_m, &s.kappa, &s.kappa_l, &s.kappa_r, &s.kappa_i,
                      &s.gamma_m, &s.g0})
        *f = hz_to_rad(*f);
    if (s.omega_c) s.omega_c = hz_to_rad(*s.omega_c);
    auto& d = raw.drive;
    d.cavity_detuning = hz_to_rad(d.cavity_detuning);
    d.mech_detuning = hz_to_rad(d.mech_detuning);
    d.lambda_par = hz_to_rad(d.lambda_par);
    raw.unit = FreqUnit::angular;
    return raw;
}

}  // namespace twotone
