#pragma once

// Least-squares machinery: a damped Gauss-Newton core (multiplicative damping,
// x10 up on a rejected step, x0.1 down on an accepted one) plus the concrete
// small fits built on it. Positive parameters are fitted in log space; angles
// unconstrained and wrapped afterwards. Everything is deterministic given the
// data, the initial guess, and the tolerances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twotone/errors.hpp"
#include "twotone/linalg.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

struct ParamSpec {
    std::string name;
    double initial = 0.0;
    bool log = false;      // fit log(value) to enforce positivity
    double scale = 1.0;    // characteristic size for steps/convergence (linear params)
};

struct FitOptions {
    int max_iterations = 200;
    double gradient_tol = 1e-10;   // relative to the initial gradient norm
    double damping_init = 1e-3;
    double damping_max = 1e14;
    double fd_step = 1e-6;         // relative finite-difference step
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> std_errors;   // curvature-based, residual-weighted
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_rel = 0.0;        // final |g|_inf / initial |g|_inf
    std::vector<double> rss_history;  // objective after each accepted step

    double value(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return values[i];
        throw Error("no fitted parameter named " + name);
    }
    double std_error(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return std_errors[i];
        throw Error("no fitted parameter named " + name);
    }
};

// residual callback: returns the residual vector, or nullopt when the trial
// point is invalid (e.g. dynamically unstable); invalid points reject the step.
using ResidualFn =
    std::function<std::optional<std::vector<double>>(const std::vector<double>&)>;

namespace detail {

inline double sumsq(const std::vector<double>& r) {
    double s = 0.0;
    for (double x : r) s += x * x;
    return s;
}

struct Transform {
    std::vector<ParamSpec> specs;

    std::vector<double> to_internal(const std::vector<double>& ext) const {
        std::vector<double> x(ext.size());
        for (std::size_t i = 0; i < ext.size(); ++i)
            x[i] = specs[i].log ? std::log(ext[i]) : ext[i];
        return x;
    }
    std::vector<double> to_external(const std::vector<double>& x) const {
        std::vector<double> e(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            e[i] = specs[i].log ? std::exp(x[i]) : x[i];
        return e;
    }
    double step_scale(std::size_t i, double xi) const {
        return specs[i].log ? std::max(1.0, std::abs(xi))
                            : std::max(std::abs(xi), std::abs(specs[i].scale));
    }
};

}  // namespace detail

inline FitResult fit_least_squares(const ResidualFn& residual, std::vector<ParamSpec> specs,
                                   FitOptions opt = {}) {
    const std::size_t p = specs.size();
    detail::Transform tf{specs};
    std::vector<double> ext0(p);
    for (std::size_t i = 0; i < p; ++i) {
        if (specs[i].log && !(specs[i].initial > 0.0))
            throw Error("log-space parameter '" + specs[i].name + "' needs a positive initial value");
        ext0[i] = specs[i].initial;
    }
    std::vector<double> x = tf.to_internal(ext0);

    auto eval = [&](const std::vector<double>& xi) { return residual(tf.to_external(xi)); };
    auto r_opt = eval(x);
    if (!r_opt) throw Error("initial fit point is invalid");
    std::vector<double> r = std::move(*r_opt);
    const std::size_t m = r.size();
    double rss = detail::sumsq(r);

    FitResult res;
    res.names.reserve(p);
    for (const auto& s : specs) res.names.push_back(s.name);
    res.rss_history.push_back(rss);

    // column-major Jacobian, central differences
    std::vector<double> jac(m * p);
    auto compute_jacobian = [&](const std::vector<double>& xc) -> bool {
        for (std::size_t i = 0; i < p; ++i) {
            const double h = opt.fd_step * tf.step_scale(i, xc[i]);
            std::vector<double> xp = xc, xm = xc;
            xp[i] += h;
            xm[i] -= h;
            auto rp = eval(xp), rm = eval(xm);
            if (rp && rm) {
                for (std::size_t k = 0; k < m; ++k)
                    jac[i * m + k] = ((*rp)[k] - (*rm)[k]) / (2.0 * h);
            } else if (rp || rm) {  // one side invalid: fall back to a one-sided difference
                const auto& rs = rp ? *rp : *rm;
                const double sign = rp ? 1.0 : -1.0;
                for (std::size_t k = 0; k < m; ++k)
                    jac[i * m + k] = sign * (rs[k] - r[k]) / h;
            } else {
                return false;
            }
        }
        return true;
    };

    double mu = opt.damping_init;
    double g0_norm = -1.0;
    double grad_rel = 1.0;
    bool invalid_terminal = false;

    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
        if (rss == 0.0) { res.converged = true; grad_rel = 0.0; break; }
        if (!compute_jacobian(x)) { invalid_terminal = true; break; }

        std::vector<double> g(p, 0.0);
        std::vector<double> a(p * p, 0.0);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t k = 0; k < m; ++k) g[i] += jac[i * m + k] * r[k];
            for (std::size_t j = i; j < p; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < m; ++k) s += jac[i * m + k] * jac[j * m + k];
                a[i * p + j] = a[j * p + i] = s;
            }
        }
        double gnorm = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            gnorm = std::max(gnorm, std::abs(g[i]) * tf.step_scale(i, x[i]));
        if (g0_norm < 0.0) g0_norm = std::max(gnorm, 1e-300);
        grad_rel = gnorm / g0_norm;
        if (grad_rel <= opt.gradient_tol) { res.converged = true; break; }

        double diag_max = 0.0;
        for (std::size_t i = 0; i < p; ++i) diag_max = std::max(diag_max, a[i * p + i]);
        if (diag_max == 0.0) { res.converged = true; break; }  // flat objective

        bool accepted = false;
        bool saw_invalid = false;
        while (mu <= opt.damping_max) {
            std::vector<double> ad = a;
            for (std::size_t i = 0; i < p; ++i)
                ad[i * p + i] += mu * std::max(a[i * p + i], 1e-12 * diag_max);
            std::vector<double> step;
            try {
                std::vector<double> rhs(p);
                for (std::size_t i = 0; i < p; ++i) rhs[i] = -g[i];
                step = solve_dense(ad, rhs);
            } catch (const SingularMatrix&) {
                mu *= 10.0;
                continue;
            }
            std::vector<double> xt = x;
            for (std::size_t i = 0; i < p; ++i) xt[i] += step[i];
            auto rt = eval(xt);
            if (rt) {
                const double rss_t = detail::sumsq(*rt);
                if (rss_t < rss) {
                    double step_rel = 0.0;
                    for (std::size_t i = 0; i < p; ++i)
                        step_rel = std::max(step_rel, std::abs(step[i]) / tf.step_scale(i, x[i]));
                    const double drop = (rss - rss_t) / std::max(rss, 1e-300);
                    x = std::move(xt);
                    r = std::move(*rt);
                    rss = rss_t;
                    res.rss_history.push_back(rss);
                    mu = std::max(mu * 0.1, 1e-15);
                    accepted = true;
                    if (step_rel < 1e-12 || drop < 1e-14) res.converged = true;
                    break;
                }
            } else {
                saw_invalid = true;
            }
            mu *= 10.0;
        }
        if (!accepted) {
            // damping exhausted: stationary to working precision
            res.converged = true;
            invalid_terminal = saw_invalid && grad_rel > std::sqrt(opt.gradient_tol);
            break;
        }
        if (res.converged) break;
    }

    res.iterations = iter + 1;
    res.gradient_rel = grad_rel;
    res.values = tf.to_external(x);
    if (invalid_terminal)
        throw UnstableFitRegion("fit terminated against an invalid (unstable) parameter region");

    // curvature-based standard errors at the solution
    res.std_errors.assign(p, 0.0);
    if (m > p && compute_jacobian(x)) {
        std::vector<double> a(p * p, 0.0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i; j < p; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < m; ++k) s += jac[i * m + k] * jac[j * m + k];
                a[i * p + j] = a[j * p + i] = s;
            }
        const double s2 = rss / static_cast<double>(m - p);
        try {
            for (std::size_t i = 0; i < p; ++i) {
                std::vector<double> e(p, 0.0);
                e[i] = 1.0;
                const auto col = solve_dense(a, e);
                double var = std::max(col[i] * s2, 0.0);
                double sig = std::sqrt(var);
                if (specs[i].log) sig *= res.values[i];  // back to natural units
                res.std_errors[i] = sig;
            }
        } catch (const SingularMatrix&) {
            // degenerate curvature: leave errors at zero
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Lorentzian peak fit
// ---------------------------------------------------------------------------

struct LorentzianGuess {
    double center = 0.0;
    double fwhm = 0.0;
    double area = 0.0;
    double offset = 0.0;
};

inline double lorentzian_value(double w, double center, double fwhm, double area, double offset) {
    const double pi = two_pi / 2.0;
    const double half = 0.5 * fwhm;
    const double d = w - center;
    return offset + area * half / (pi * (d * d + half * half));
}

namespace detail {

inline LorentzianGuess default_lorentzian_guess(const Spectrum& s) {
    const std::size_t n = s.size();
    const std::size_t edge = std::max<std::size_t>(2, n / 10);
    double lo_mean = 0.0, hi_mean = 0.0;
    for (std::size_t i = 0; i < edge; ++i) {
        lo_mean += s.value[i];
        hi_mean += s.value[n - 1 - i];
    }
    lo_mean /= static_cast<double>(edge);
    hi_mean /= static_cast<double>(edge);
    LorentzianGuess g;
    g.offset = std::min(lo_mean, hi_mean);

    std::size_t peak = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (s.value[i] > s.value[peak]) peak = i;
    g.center = s.freq[peak];
    const double height = s.value[peak] - g.offset;
    if (!(height > 0.0) || !std::isfinite(height))
        throw DegenerateSpectrum("no peak above the baseline");

    const double half_level = g.offset + 0.5 * height;
    double left = s.freq.front(), right = s.freq.back();
    for (std::size_t i = peak; i-- > 0;)
        if (s.value[i] < half_level) { left = s.freq[i]; break; }
    for (std::size_t i = peak + 1; i < n; ++i)
        if (s.value[i] < half_level) { right = s.freq[i]; break; }
    g.fwhm = std::max(right - left, (s.freq.back() - s.freq.front()) / static_cast<double>(n));

    double area = 0.0;  // trapezoid above the baseline
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double y0 = s.value[i] - g.offset;
        const double y1 = s.value[i + 1] - g.offset;
        area += 0.5 * (y0 + y1) * (s.freq[i + 1] - s.freq[i]);
    }
    g.area = std::max(area, height * g.fwhm * 0.1);
    return g;
}

}  // namespace detail

// Single-Lorentzian least squares: center, FWHM, area, constant offset.
// Width and area are fitted in log space.
inline FitResult fit_lorentzian(const Spectrum& s,
                                std::optional<LorentzianGuess> guess = std::nullopt,
                                FitOptions opt = {}) {
    if (s.size() < 16) throw DegenerateSpectrum("need at least 16 points");
    double vmin = s.value[0], vmax = s.value[0];
    for (double v : s.value) { vmin = std::min(vmin, v); vmax = std::max(vmax, v); }
    if (!(vmax > vmin) || !std::isfinite(vmax - vmin))
        throw DegenerateSpectrum("flat spectrum");

    const LorentzianGuess g = guess ? *guess : detail::default_lorentzian_guess(s);
    const double span = s.freq.back() - s.freq.front();

    auto resid = [&](const std::vector<double>& p) -> std::optional<std::vector<double>> {
        std::vector<double> r(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double model = lorentzian_value(s.freq[i], p[0], p[1], p[2], p[3]);
            r[i] = model - s.value[i];
            if (s.has_sigma() && s.sigma[i] > 0.0) r[i] /= s.sigma[i];
        }
        return r;
    };
    std::vector<ParamSpec> specs = {
        {"center", g.center, false, span * 0.05},
        {"fwhm", std::max(g.fwhm, span * 1e-9), true, 0.0},
        {"area", std::max(g.area, (vmax - vmin) * span * 1e-9), true, 0.0},
        {"offset", g.offset, false, std::max(std::abs(vmax), std::abs(vmin))},
    };
    FitResult res = fit_least_squares(resid, std::move(specs), opt);
    if (!res.converged) throw NonConvergence("lorentzian fit did not converge");
    return res;
}

// ---------------------------------------------------------------------------
// Linear calibration fit (ordinary least squares, closed form)
// ---------------------------------------------------------------------------

inline FitResult fit_linear_calibration(std::span<const std::pair<double, double>> pts,
                                        bool with_intercept = false) {
    const std::size_t n = pts.size();
    if (n < 2) throw DegenerateDesign("need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    FitResult res;
    res.converged = true;
    if (with_intercept) {
        const double det = n * sxx - sx * sx;
        double xbar = sx / n;
        double spread = 0.0;
        for (const auto& [x, y] : pts) spread = std::max(spread, std::abs(x - xbar));
        if (spread == 0.0 || det <= 0.0) throw DegenerateDesign("all abscissae equal");
        const double slope = (n * sxy - sx * sy) / det;
        const double intercept = (sy - slope * sx) / n;
        double rss = 0.0;
        for (const auto& [x, y] : pts) {
            const double e = y - slope * x - intercept;
            rss += e * e;
        }
        const double s2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
        res.names = {"slope", "intercept"};
        res.values = {slope, intercept};
        res.std_errors = {std::sqrt(s2 * n / det), std::sqrt(s2 * sxx / det)};
        res.rss = rss;
    } else {
        if (sxx == 0.0) throw DegenerateDesign("all abscissae zero");
        const double slope = sxy / sxx;
        double rss = 0.0;
        for (const auto& [x, y] : pts) {
            const double e = y - slope * x;
            rss += e * e;
        }
        const double s2 = n > 1 ? rss / static_cast<double>(n - 1) : 0.0;
        res.names = {"slope"};
        res.values = {slope};
        res.std_errors = {std::sqrt(s2 / sxx)};
        res.rss = rss;
    }
    res.rss_history = {res.rss};
    return res;
}

// ---------------------------------------------------------------------------
// Quadratic background subtraction for the BAE sideband region
// ---------------------------------------------------------------------------

struct BackgroundSubtraction {
    Spectrum corrected;
    Spectrum background;              // fitted polynomial sampled on the grid
    std::array<double, 3> poly{};     // coefficients in centered/scaled coordinates
};

inline BackgroundSubtraction subtract_background_quadratic(const Spectrum& s,
                                                           double band_lo, double band_hi) {
    if (band_lo >= band_hi) throw PreconditionViolated("empty exclude band");
    if (band_lo <= s.freq.front() || band_hi >= s.freq.back())
        throw PreconditionViolated("exclude band must lie strictly inside the grid");

    const double mid = 0.5 * (s.freq.front() + s.freq.back());
    const double half = 0.5 * (s.freq.back() - s.freq.front());
    auto u_of = [&](double w) { return (w - mid) / half; };

    std::vector<double> ata(9, 0.0), atb(3, 0.0);
    std::size_t n_used = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double w = s.freq[i];
        if (w >= band_lo && w <= band_hi) continue;
        const double u = u_of(w);
        const double basis[3] = {1.0, u, u * u};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) ata[a * 3 + b] += basis[a] * basis[b];
            atb[a] += basis[a] * s.value[i];
        }
        ++n_used;
    }
    if (n_used < 10)
        throw InsufficientBackgroundPoints("only " + std::to_string(n_used) +
                                           " points outside the exclude band");
    const auto c = solve_dense(ata, atb);

    BackgroundSubtraction out;
    out.poly = {c[0], c[1], c[2]};
    out.corrected.freq = s.freq;
    out.background.freq = s.freq;
    out.corrected.value.resize(s.size());
    out.background.value.resize(s.size());
    out.corrected.sigma = s.sigma;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double u = u_of(s.freq[i]);
        const double bg = c[0] + c[1] * u + c[2] * u * u;
        out.background.value[i] = bg;
        out.corrected.value[i] = s.value[i] - bg;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Calibration constants and the BAE power-to-variance conversion
// ---------------------------------------------------------------------------

struct CalibrationConstants {
    double a_minus = 0.0;  // rad^2 s^-1 W^-1, red-pump coupling calibration
    double a_plus = 0.0;   // rad^2 s^-1 W^-1, blue-pump coupling calibration
    double b_minus = 0.0;  // (rad/s)^2, thermal sideband calibration
    std::array<double, 2> parasitic_correction{1.0, 1.0};

    // measurement-chain gain factor; fixed identity b_minus / a_minus
    double gain_product() const { return b_minus / a_minus; }
};

// Normalized BAE sideband power -> quadrature variance (x_zp^2 units).
// `cal` must hold the BAE-configuration thermal calibration.
inline double bae_sideband_to_variance(double power_ratio, const CalibrationConstants& cal,
                                       double cavity_detuning, double kappa) {
    if (power_ratio < 0.0) throw NegativePower("sideband power ratio must be >= 0");
    if (!(cal.b_minus > 0.0)) throw Error("thermal calibration b_minus must be positive");
    const double d2 = cavity_detuning * cavity_detuning;
    return (4.0 * d2 + kappa * kappa) / (4.0 * cal.b_minus) * power_ratio;
}

inline double bae_variance_to_sideband(double variance, const CalibrationConstants& cal,
                                       double cavity_detuning, double kappa) {
    if (variance < 0.0) throw NegativePower("variance must be >= 0");
    if (!(cal.b_minus > 0.0)) throw Error("thermal calibration b_minus must be positive");
    const double d2 = cavity_detuning * cavity_detuning;
    return variance * 4.0 * cal.b_minus / (4.0 * d2 + kappa * kappa);
}

}  // namespace twotone
