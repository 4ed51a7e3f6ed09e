#pragma once

// Mechanical quadrature spectra, variance integrals, the closed-form variance
// expressions valid at zero detunings, and phase scans (variance and fitted
// linewidth versus probe phase). Convention: X_phi = x_zp (b e^{i phi} +
// b^dag e^{-i phi}); spectra are symmetrized and two-sided with
// <X_phi^2> = \int dw/2pi S[w].

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "twotone/fit.hpp"
#include "twotone/params.hpp"
#include "twotone/response.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

// Symmetrized spectrum of X_phi in units of x_zp^2 s/rad, from rows 3-4 of
// chi and the symmetrized (n + 1/2) input weights.
inline double quadrature_spectrum_at(const Bundle& b, double phi, double omega) {
    const Mat4 x = chi(b, omega);
    const cplx ep = std::polar(1.0, phi);
    const cplx em = std::conj(ep);
    double cav = 0.0, mech = 0.0;
    for (int j = 0; j < 2; ++j) cav += std::norm(ep * x(2, j) + em * x(3, j));
    for (int j = 2; j < 4; ++j) mech += std::norm(ep * x(2, j) + em * x(3, j));
    return b.system.kappa * cav * (b.baths.n_c_th + 0.5) +
           b.system.gamma_m * mech * (b.baths.n_m_th + 0.5);
}

inline Spectrum quadrature_spectrum(const Bundle& b, double phi, std::span<const double> grid) {
    require_stationary(b);
    Spectrum out;
    out.freq.assign(grid.begin(), grid.end());
    out.value.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
        out.value[k] = quadrature_spectrum_at(b, phi, grid[k]);
    return out;
}

namespace detail {

// Adaptive Simpson on [a, b] with a pre-evaluated midpoint. Tolerance is
// absolute and halves on each split (Richardson error/15 acceptance).
template <class F>
double adaptive_simpson(const F& f, double a, double fa, double b, double fb, double m,
                        double fm, double tol, int depth, std::size_t& evals,
                        std::size_t max_evals) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    evals += 2;
    if (evals > max_evals) throw IntegrationFailure("quadrature evaluation budget exhausted");
    const double h = b - a;
    const double whole = h / 6.0 * (fa + 4.0 * fm + fb);
    const double left = h / 12.0 * (fa + 4.0 * flm + fm);
    const double right = h / 12.0 * (fm + 4.0 * frm + fb);
    const double err = left + right - whole;
    if (std::abs(err) <= 15.0 * tol || h < 1e-15)
        return left + right + err / 15.0;
    if (depth <= 0) throw IntegrationFailure("quadrature recursion depth exhausted");
    return adaptive_simpson(f, a, fa, m, fm, lm, flm, 0.5 * tol, depth - 1, evals, max_evals) +
           adaptive_simpson(f, m, fm, b, fb, rm, frm, 0.5 * tol, depth - 1, evals, max_evals);
}

// Frequencies where the integrand has structure; used to seed the partition
// so narrow features cannot slip between initial sample points.
inline std::vector<double> feature_frequencies(const Bundle& b) {
    const double geff = effective_mech_width(b);
    const double kappa = b.system.kappa;
    std::vector<double> f = {0.0};
    auto add = [&f](double w) {
        if (w != 0.0 && std::isfinite(w)) { f.push_back(w); f.push_back(-w); }
    };
    add(b.drive.mech_detuning);
    add(b.drive.cavity_detuning);
    add(0.5 * geff);
    add(2.0 * geff);
    add(0.5 * kappa);
    add(kappa);
    if (b.couplings.bogoliubov_g && *b.couplings.bogoliubov_g > 0.125 * kappa) {
        add(*b.couplings.bogoliubov_g);  // normal-mode splitting in strong coupling
        add(2.0 * *b.couplings.bogoliubov_g);
    }
    const double d = b.drive.mech_detuning;
    if (d != 0.0) { add(d + geff); add(d - geff); }
    return f;
}

}  // namespace detail

// <X_phi^2> by adaptive quadrature over the compactified axis w = W tan(theta),
// W = max(kappa, 10 Gamma_eff). Relative tolerance applies to the total.
inline double quadrature_variance(const Bundle& b, double phi, double rel_tol = 1e-9) {
    require_stationary(b);
    const double cap = std::max(b.system.kappa, 10.0 * effective_mech_width(b));
    auto integrand = [&](double theta) {
        const double t = std::tan(theta);
        const double w = cap * t;
        const double jac = cap * (1.0 + t * t);
        return quadrature_spectrum_at(b, phi, w) * jac / two_pi;
    };

    const double half_pi = two_pi / 4.0;
    const double edge = half_pi - 1e-9;  // tails are ~1/w^2: the sliver beyond is negligible
    std::vector<double> knots = {-edge, edge};
    for (double w : detail::feature_frequencies(b)) {
        const double th = std::atan(w / cap);
        if (th > -edge && th < edge) knots.push_back(th);
    }
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    struct Cell { double a, fa, b, fb, m, fm; };
    std::vector<Cell> cells;
    double rough = 0.0;
    double f_prev = integrand(knots.front());
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        Cell c;
        c.a = knots[i];
        c.b = knots[i + 1];
        c.fa = f_prev;
        c.fb = integrand(c.b);
        c.m = 0.5 * (c.a + c.b);
        c.fm = integrand(c.m);
        f_prev = c.fb;
        rough += (c.b - c.a) / 6.0 * (c.fa + 4.0 * c.fm + c.fb);
        cells.push_back(c);
    }

    const double tol_total = rel_tol * std::max(std::abs(rough), 1e-300);
    std::size_t evals = 0;
    const std::size_t max_evals = 4'000'000;
    double total = 0.0;
    for (const Cell& c : cells) {
        const double tol = tol_total * std::max((c.b - c.a) / (2.0 * edge), 1e-3);
        total += detail::adaptive_simpson(integrand, c.a, c.fa, c.b, c.fb, c.m, c.fm, tol, 64,
                                          evals, max_evals);
    }
    if (!std::isfinite(total))
        throw IntegrationFailure("variance integral did not evaluate to a finite value");
    return total;
}

// Closed-form variances, valid for Delta = delta = 0, lambda = 0, G+ < G-.
// `exact` keeps all orders in G, kappa, Gamma_m; `weak` is the
// kappa >> G, Gamma_m reduction (engineered-reservoir rate picture).
struct ClosedFormVariances {
    double var_x1_exact = 0.0;
    double var_x2_exact = 0.0;
    double var_x1_weak = 0.0;
    double var_x2_weak = 0.0;
};

inline ClosedFormVariances closed_form_variances(const Bundle& b) {
    if (b.drive.cavity_detuning != 0.0 || b.drive.mech_detuning != 0.0)
        throw PreconditionViolated("closed forms require Delta = delta = 0");
    if (b.drive.lambda_par != 0.0)
        throw PreconditionViolated("closed forms require lambda = 0");
    if (!b.couplings.bogoliubov_g)
        throw PreconditionViolated("closed forms require G+ < G-");

    const double kappa = b.system.kappa;
    const double gamma = b.system.gamma_m;
    const double gm = b.couplings.g_minus;
    const double gp = b.couplings.g_plus;
    const double g2 = gm * gm - gp * gp;
    const double u = 2.0 * b.baths.n_m_th + 1.0;
    const double v = 2.0 * b.baths.n_c_th + 1.0;
    const double geff = *b.couplings.gamma_eff;

    ClosedFormVariances out;
    const double den = (kappa + gamma) * (4.0 * g2 + kappa * gamma);
    const double dm = gm - gp, dp = gm + gp;
    out.var_x1_exact = (4.0 * dm * dm * kappa * v + (4.0 * g2 + kappa * (kappa + gamma)) * gamma * u) / den;
    out.var_x2_exact = (4.0 * dp * dp * kappa * v + (4.0 * g2 + kappa * (kappa + gamma)) * gamma * u) / den;
    out.var_x1_weak = (gamma * u + b.couplings.gamma_opt_minus * v) / geff;
    out.var_x2_weak = (gamma * u + b.couplings.gamma_opt_plus * v) / geff;
    return out;
}

// ---------------------------------------------------------------------------
// Phase scans
// ---------------------------------------------------------------------------

struct PhaseScanOptions {
    // With follow_probe the parametric phase tracks the probe, psi = phi + psi0;
    // with fixed it stays at psi0 regardless of phi.
    enum class PsiMode { fixed, follow_probe };
    PsiMode psi_mode = PsiMode::fixed;
    double psi0 = 0.0;
    bool fit_linewidth = true;
    bool compute_variance = true;
    std::size_t spectrum_points = 2049;
    double variance_rel_tol = 1e-9;
};

struct QuadratureResult {
    double phi = 0.0;
    Spectrum spectrum;
    double variance = 0.0;
    std::optional<double> linewidth;  // FWHM of a single-Lorentzian fit
};

namespace detail {

inline Bundle bundle_at_phase(const Bundle& base, double phi, const PhaseScanOptions& opt) {
    Bundle b = base;
    b.drive.phi = wrap_angle(phi);
    b.drive.psi = wrap_angle(opt.psi_mode == PhaseScanOptions::PsiMode::follow_probe
                                 ? opt.psi0 + phi
                                 : opt.psi0);
    b.couplings = derive_couplings(b.system, b.drive);
    return b;
}

// Grid sized from the mechanical quasi-mode rates (the two smallest real
// parts of the drift eigenvalues): wide enough for the broad component,
// fine enough for the narrow one.
inline std::vector<double> linewidth_grid(const Bundle& b, std::size_t points) {
    const auto rep = assess_stability(b);
    const double r1 = rep.eigenvalues[0].real();
    const double r2 = rep.eigenvalues[1].real();
    const double wide = 2.0 * r2;   // FWHM of the wider mechanical component
    const double narrow = 2.0 * r1;
    std::size_t n = points;
    if (narrow < wide / 60.0) n = std::max<std::size_t>(n, 8193);
    const double center = -b.drive.mech_detuning;  // mechanical feature location
    return linspace(center - 4.0 * wide, center + 4.0 * wide, n);
}

}  // namespace detail

// Per-phase spectrum, variance, and Lorentzian-fit linewidth. With the
// follow-probe hypothesis the drift matrix changes with phi, so stability is
// re-checked at every phase.
inline std::vector<QuadratureResult> phase_scan(const Bundle& base, std::span<const double> phis,
                                                const PhaseScanOptions& opt = {}) {
    std::vector<QuadratureResult> out;
    out.reserve(phis.size());
    for (double phi : phis) {
        const Bundle b = detail::bundle_at_phase(base, phi, opt);
        const auto rep = assess_stability(b);
        if (!rep.stable || rep.margin < stability_margin_threshold(b))
            throw UnstableAtPhase(phi, "unstable at probe phase " + std::to_string(phi) + " rad");
        QuadratureResult r;
        r.phi = phi;
        const auto grid = detail::linewidth_grid(b, opt.spectrum_points);
        r.spectrum = quadrature_spectrum(b, phi, grid);
        if (opt.compute_variance)
            r.variance = quadrature_variance(b, phi, opt.variance_rel_tol);
        if (opt.fit_linewidth) {
            const FitResult fit = fit_lorentzian(r.spectrum);
            r.linewidth = fit.value("fwhm");
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace twotone
