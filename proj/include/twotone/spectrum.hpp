#pragma once

// Frequency-grid containers shared by the response, quadrature, and fitting
// code. Frequencies are angular (rad/s) in the rotating frame; lab-frame Hz
// axes only exist at the file I/O boundary.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "twotone/errors.hpp"
#include "twotone/params.hpp"

namespace twotone {

struct Spectrum {
    std::vector<double> freq;   // rad/s, strictly increasing
    std::vector<double> value;
    std::vector<double> sigma;  // empty, or one entry per bin

    std::size_t size() const { return freq.size(); }
    bool has_sigma() const { return !sigma.empty(); }
};

struct ComplexSpectrum {
    std::vector<double> freq;  // rad/s
    std::vector<cplx> value;

    std::size_t size() const { return freq.size(); }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    if (n == 1) { g[0] = lo; return g; }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + step * static_cast<double>(i);
    g.back() = hi;
    return g;
}

// Width scale used for grid sizing when the Bogoliubov picture (and so
// gamma_eff) is undefined: total optical damping magnitude is a safe bound.
inline double effective_mech_width(const Bundle& b) {
    if (b.couplings.gamma_eff) return *b.couplings.gamma_eff;
    const double g2 = b.couplings.g_minus * b.couplings.g_minus +
                      b.couplings.g_plus * b.couplings.g_plus;
    return b.system.gamma_m + 4.0 * g2 / b.system.kappa;
}

// Default symmetric grid: wide enough for the kappa-scale cavity feature and
// the narrow mechanical feature at the same time.
inline std::vector<double> default_grid(const Bundle& b, std::size_t points = 32768) {
    const double geff = effective_mech_width(b);
    const double span = 20.0 * std::max({b.system.kappa, geff,
                                         std::abs(b.drive.cavity_detuning) + 5.0 * geff});
    return linspace(-span, span, points);
}

}  // namespace twotone
