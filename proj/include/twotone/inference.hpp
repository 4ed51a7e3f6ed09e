#pragma once

// Inverse problems that need the full forward model: fitting measured output
// noise spectra for detunings, linewidths and occupations, and extracting the
// mechanical parametric interaction from linewidth-versus-phase data under
// the two phase hypotheses.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "twotone/fit.hpp"
#include "twotone/params.hpp"
#include "twotone/quadrature.hpp"
#include "twotone/response.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

// ---------------------------------------------------------------------------
// Output-spectrum fit
// ---------------------------------------------------------------------------

// Fixed inputs for the spectrum fit: enhanced couplings and the measurement
// gain come from the calibration procedure; the base bundle supplies
// everything not being fitted (omega_m, port split fractions, x_zp) together
// with fallback initial values.
struct OutputSpectrumFitSetup {
    Bundle base;
    double g_minus = 0.0;  // rad/s, fixed by calibration
    double g_plus = 0.0;   // rad/s, fixed by calibration
    double gain = 1.0;     // measured-power units per quantum (e.g. b-/a-)
};

namespace detail {

inline Bundle output_fit_bundle(const OutputSpectrumFitSetup& setup, double Delta, double delta,
                                double kappa, double gamma_m, double n_c, double n_m) {
    Bundle b = setup.base;
    const double fl = setup.base.system.kappa_l / setup.base.system.kappa;
    const double fr = setup.base.system.kappa_r / setup.base.system.kappa;
    b.system.kappa = kappa;
    b.system.kappa_l = fl * kappa;
    b.system.kappa_r = fr * kappa;
    b.system.kappa_i = kappa - b.system.kappa_l - b.system.kappa_r;
    b.system.gamma_m = gamma_m;
    b.drive.cavity_detuning = Delta;
    b.drive.mech_detuning = delta;
    const double g0 = b.system.g0;
    b.drive.np_minus = (setup.g_minus / g0) * (setup.g_minus / g0);
    b.drive.np_plus = (setup.g_plus / g0) * (setup.g_plus / g0);
    b.baths.n_c_th = n_c;
    b.baths.n_m_th = n_m;
    b.baths.per_port.reset();
    b.couplings = derive_couplings(b.system, b.drive);
    return b;
}

struct OutputGuess {
    double Delta, delta, kappa, gamma_m, n_c, n_m;
};

// Occupations enter the model linearly, so with the shape parameters held at
// their guesses the best (n_c, n_m) follows from one 2x2 normal-equation
// solve against the vacuum / unit-occupation basis spectra.
inline std::pair<double, double> solve_occupations(const OutputSpectrumFitSetup& setup,
                                                   const Spectrum& y_quanta, double Delta,
                                                   double delta, double kappa, double gamma_m) {
    const Bundle b0 = output_fit_bundle(setup, Delta, delta, kappa, gamma_m, 0.0, 0.0);
    const Bundle bc = output_fit_bundle(setup, Delta, delta, kappa, gamma_m, 1.0, 0.0);
    const Bundle bm = output_fit_bundle(setup, Delta, delta, kappa, gamma_m, 0.0, 1.0);
    double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
    for (std::size_t i = 0; i < y_quanta.size(); ++i) {
        const double w = y_quanta.freq[i];
        const double s0 = output_noise_at(b0, w);
        const double sc = output_noise_at(bc, w) - s0;
        const double sm = output_noise_at(bm, w) - s0;
        const double d = y_quanta.value[i] - s0;
        a11 += sc * sc;
        a12 += sc * sm;
        a22 += sm * sm;
        r1 += sc * d;
        r2 += sm * d;
    }
    const double det = a11 * a22 - a12 * a12;
    double nc = 0.1, nm = 1.0;
    if (det > 0.0) {
        nc = (r1 * a22 - r2 * a12) / det;
        nm = (r2 * a11 - r1 * a12) / det;
    }
    return {std::max(nc, 1e-6), std::max(nm, 1e-6)};
}

inline OutputGuess output_initial_guess(const OutputSpectrumFitSetup& setup,
                                        const Spectrum& y_quanta) {
    const std::size_t n = y_quanta.size();
    const auto& f = y_quanta.freq;
    const auto& y = y_quanta.value;

    // tallest narrow feature -> one mechanical peak
    std::size_t peak = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (y[i] > y[peak]) peak = i;
    const double w_peak = f[peak];

    // local half-max width of that feature -> Gamma_eff guess
    double base_level = 0.0;
    {
        std::vector<double> copy(y.begin(), y.end());
        std::nth_element(copy.begin(), copy.begin() + n / 2, copy.end());
        base_level = copy[n / 2];
    }
    const double half_level = base_level + 0.5 * (y[peak] - base_level);
    double left = f.front(), right = f.back();
    for (std::size_t i = peak; i-- > 0;)
        if (y[i] < half_level) { left = f[i]; break; }
    for (std::size_t i = peak + 1; i < n; ++i)
        if (y[i] < half_level) { right = f[i]; break; }
    const double geff_guess =
        std::max(right - left, (f.back() - f.front()) / static_cast<double>(n));

    // second mechanical peak outside the first one's neighborhood
    std::optional<double> w_peak2;
    {
        double best = -1.0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::abs(f[i] - w_peak) < 8.0 * geff_guess) continue;
            if (y[i] > best) { best = y[i]; best_i = i; }
        }
        if (best > base_level + 0.25 * (y[peak] - base_level)) w_peak2 = f[best_i];
    }
    double delta_mag = w_peak2 ? 0.5 * std::abs(*w_peak2 - w_peak) : std::abs(w_peak);

    // cavity envelope from the data outside the mechanical region
    const double mech_center = w_peak2 ? 0.5 * (w_peak + *w_peak2) : w_peak;
    const double mech_halfwidth = std::abs(w_peak - mech_center) + 20.0 * geff_guess;
    double env_max = 0.0, env_w = setup.base.drive.cavity_detuning;
    std::vector<std::pair<double, double>> env;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(f[i] - mech_center) < mech_halfwidth) continue;
        env.emplace_back(f[i], y[i]);
        if (y[i] > env_max) { env_max = y[i]; env_w = f[i]; }
    }
    double Delta0 = setup.base.drive.cavity_detuning;
    double kappa0 = setup.base.system.kappa;
    if (env.size() > 16 && env_max > 0.0) {
        Delta0 = -env_w;
        double e_left = env.front().first, e_right = env.back().first;
        for (const auto& [w, v] : env)
            if (w < env_w && v < 0.5 * env_max) e_left = w;
        for (auto it = env.rbegin(); it != env.rend(); ++it)
            if (it->first > env_w && it->second < 0.5 * env_max) e_right = it->first;
        const double fw = e_right - e_left;
        if (fw > 0.0 && fw < (f.back() - f.front()))
            kappa0 = std::clamp(fw, 0.02 * setup.base.system.kappa, 50.0 * setup.base.system.kappa);
    }

    // widths: Gamma_eff = Gamma_m + 4 G^2/kappa with G fixed -> Gamma_m guess
    const double g2 = setup.g_minus * setup.g_minus - setup.g_plus * setup.g_plus;
    const double gamma0 =
        std::max(geff_guess - 4.0 * g2 / kappa0, 1e-3 * geff_guess);

    // try both signs of delta, keep the better linear-occupation solution
    OutputGuess best{};
    double best_rss = -1.0;
    for (double delta0 : {delta_mag, -delta_mag}) {
        const auto [nc, nm] = solve_occupations(setup, y_quanta, Delta0, delta0, kappa0, gamma0);
        const Bundle b = output_fit_bundle(setup, Delta0, delta0, kappa0, gamma0, nc, nm);
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = output_noise_at(b, f[i]) - y[i];
            rss += e * e;
        }
        if (best_rss < 0.0 || rss < best_rss) {
            best_rss = rss;
            best = {Delta0, delta0, kappa0, gamma0, nc, nm};
        }
        if (delta_mag == 0.0) break;
    }
    return best;
}

}  // namespace detail

// Weighted least squares of a background-subtracted measured spectrum against
// gain * S[w]. Free: Delta, delta, kappa, Gamma_m, n_c_th, n_m_th. Weights
// come from the sigma column when present, otherwise uniform. Trial points
// that leave the stable region reject the step.
inline FitResult fit_output_spectrum(const Spectrum& measured,
                                     const OutputSpectrumFitSetup& setup, FitOptions opt = {}) {
    if (measured.size() < 32) throw DegenerateSpectrum("need at least 32 spectrum points");
    Spectrum y_quanta;  // device-referred (gain removed)
    y_quanta.freq = measured.freq;
    y_quanta.value.resize(measured.size());
    for (std::size_t i = 0; i < measured.size(); ++i)
        y_quanta.value[i] = measured.value[i] / setup.gain;

    const auto g = detail::output_initial_guess(setup, y_quanta);

    auto resid = [&](const std::vector<double>& p) -> std::optional<std::vector<double>> {
        const Bundle b = detail::output_fit_bundle(setup, p[0], p[1], p[2], p[3], p[4], p[5]);
        const auto rep = assess_stability(b);
        if (!rep.stable || rep.margin < stability_margin_threshold(b)) return std::nullopt;
        std::vector<double> r(measured.size());
        for (std::size_t i = 0; i < measured.size(); ++i) {
            r[i] = setup.gain * output_noise_at(b, measured.freq[i]) - measured.value[i];
            if (measured.has_sigma() && measured.sigma[i] > 0.0) r[i] /= measured.sigma[i];
        }
        return r;
    };

    const double kscale = setup.base.system.kappa;
    std::vector<ParamSpec> specs = {
        {"Delta", g.Delta, false, 0.1 * kscale},
        {"delta", g.delta, false, 0.01 * kscale},
        {"kappa", g.kappa, true, 0.0},
        {"gamma_m", g.gamma_m, true, 0.0},
        {"n_c_th", g.n_c, true, 0.0},
        {"n_m_th", g.n_m, true, 0.0},
    };
    FitResult res = fit_least_squares(resid, std::move(specs), opt);
    if (!res.converged) throw NonConvergence("output spectrum fit did not converge");
    return res;
}

// ---------------------------------------------------------------------------
// Parametric-drive fit
// ---------------------------------------------------------------------------

struct PhaseLinewidthData {
    std::vector<double> phi;    // rad
    std::vector<double> gamma;  // measured quadrature linewidth, FWHM rad/s
    std::vector<double> sigma;  // 1-sigma uncertainty per point, rad/s
};

enum class ParametricHypothesis {
    follow_probe,  // psi = phi + psi0
    constant_psi,  // psi = psi0
};

namespace detail {

inline std::vector<double> predicted_linewidths(const Bundle& base,
                                                const std::vector<double>& phis, double lambda,
                                                double psi0, ParametricHypothesis hyp,
                                                std::size_t points) {
    Bundle b = base;
    b.drive.lambda_par = lambda;
    b.couplings = derive_couplings(b.system, b.drive);
    PhaseScanOptions opt;
    opt.psi_mode = hyp == ParametricHypothesis::follow_probe
                       ? PhaseScanOptions::PsiMode::follow_probe
                       : PhaseScanOptions::PsiMode::fixed;
    opt.psi0 = psi0;
    opt.compute_variance = false;
    opt.spectrum_points = points;
    const auto scan = phase_scan(b, phis, opt);
    std::vector<double> out(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) out[i] = *scan[i].linewidth;
    return out;
}

}  // namespace detail

// Nested least squares for (lambda, psi0): every trial predicts the
// quadrature linewidth at each measured phase through the full spectrum +
// Lorentzian-fit pipeline and compares with the data. Run once per
// hypothesis and rank by residual.
inline FitResult fit_parametric_drive(const PhaseLinewidthData& data, const Bundle& base,
                                      ParametricHypothesis hyp, FitOptions opt = {},
                                      std::size_t spectrum_points = 1025) {
    if (data.phi.size() < 6) throw PreconditionViolated("need at least 6 phase points");
    if (data.gamma.size() != data.phi.size() || data.sigma.size() != data.phi.size())
        throw PreconditionViolated("phi/gamma/sigma lengths differ");

    // surface instability of the base configuration immediately
    detail::predicted_linewidths(base, {data.phi.front()}, 0.0, 0.0, hyp, 129);

    auto residual_at = [&](double lambda, double psi0,
                           bool nothrow) -> std::optional<std::vector<double>> {
        try {
            const auto pred =
                detail::predicted_linewidths(base, data.phi, lambda, psi0, hyp, spectrum_points);
            std::vector<double> r(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i)
                r[i] = (pred[i] - data.gamma[i]) / data.sigma[i];
            return r;
        } catch (const UnstableAtPhase&) {
            if (!nothrow) throw;
            return std::nullopt;
        } catch (const DegenerateSpectrum&) {
            if (!nothrow) throw;
            return std::nullopt;
        }
    };

    // coarse start: amplitude of the linewidth modulation sets lambda's scale,
    // a small psi0 grid picks the right basin for the angle
    double gmax = data.gamma[0], gmin = data.gamma[0];
    for (double g : data.gamma) { gmax = std::max(gmax, g); gmin = std::min(gmin, g); }
    const double geff = effective_mech_width(base);
    const double lam_floor = 1e-4 * geff;
    double lam0 = std::max(0.125 * (gmax - gmin), lam_floor);
    double psi0_best = 0.0, lam_best = lam0;
    double rss_best = -1.0;
    for (double lam : {lam0, 3.0 * lam0}) {
        for (int k = 0; k < 6; ++k) {
            const double psi0 = -two_pi / 2.0 + (k + 0.5) * (two_pi / 6.0);
            const auto r = residual_at(lam, psi0, true);
            if (!r) continue;
            const double rss = detail::sumsq(*r);
            if (rss_best < 0.0 || rss < rss_best) {
                rss_best = rss;
                psi0_best = psi0;
                lam_best = lam;
            }
        }
        if (gmax - gmin < 1e-3 * geff) break;  // flat data: no need to probe larger lambda
    }
    if (rss_best < 0.0) throw UnstableAtPhase(data.phi[0], "no stable starting point found");

    auto resid = [&](const std::vector<double>& p) -> std::optional<std::vector<double>> {
        return residual_at(p[0], p[1], true);
    };
    std::vector<ParamSpec> specs = {
        {"lambda_par", lam_best, true, 0.0},
        {"psi0", psi0_best, false, 0.5},
    };
    FitResult res = fit_least_squares(resid, std::move(specs), opt);
    if (!res.converged) throw NonConvergence("parametric-drive fit did not converge");
    for (std::size_t i = 0; i < res.names.size(); ++i)
        if (res.names[i] == "psi0") res.values[i] = wrap_angle(res.values[i]);
    return res;
}

}  // namespace twotone
