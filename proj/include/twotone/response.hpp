#pragma once

// Frequency-domain linear response of the linearized Langevin model: the 4x4
// susceptibility in the (d, d^dag, b, b^dag) basis, dynamical stability of
// the drift matrix, and the transmission / symmetrized output-noise spectra.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>

#include "twotone/linalg.hpp"
#include "twotone/params.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

// Inverse susceptibility evaluated at omega: chi^-1[w] = M - i w I, with M
// the drift matrix. Rows/cols ordered (d, d^dag, b, b^dag).
inline Mat4 chi_inverse_matrix(const Bundle& b, double omega) {
    const cplx i(0.0, 1.0);
    const double kappa = b.system.kappa;
    const double gamma = b.system.gamma_m;
    const double Delta = b.drive.cavity_detuning;
    const double delta = b.drive.mech_detuning;
    const double gm = b.couplings.g_minus;
    const double gp = b.couplings.g_plus;
    const cplx par = 2.0 * i * b.drive.lambda_par * std::exp(-i * b.drive.psi);

    Mat4 m;
    m(0, 0) = 0.5 * kappa - i * (omega + Delta);
    m(0, 2) = -i * gm;
    m(0, 3) = -i * gp;
    m(1, 1) = 0.5 * kappa - i * (omega - Delta);
    m(1, 2) = i * gp;
    m(1, 3) = i * gm;
    m(2, 0) = -i * gm;
    m(2, 1) = -i * gp;
    m(2, 2) = 0.5 * gamma - i * (omega + delta);
    m(2, 3) = par;
    m(3, 0) = i * gp;
    m(3, 1) = i * gm;
    m(3, 2) = std::conj(par);
    m(3, 3) = 0.5 * gamma - i * (omega - delta);
    return m;
}

inline Mat4 drift_matrix(const Bundle& b) { return chi_inverse_matrix(b, 0.0); }

struct StabilityReport {
    bool stable = false;
    std::array<cplx, 4> eigenvalues{};  // of the drift matrix M
    double margin = 0.0;                // min real part (rad/s); > 0 when stable
};

// Stationary spectra exist iff every drift eigenvalue has positive real part.
inline StabilityReport assess_stability(const Bundle& b) {
    StabilityReport rep;
    rep.eigenvalues = eigenvalues4(drift_matrix(b));
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
              [](const cplx& x, const cplx& y) {
                  return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
              });
    rep.margin = rep.eigenvalues[0].real();
    rep.stable = rep.margin > 0.0;
    return rep;
}

// Numerical inversion blows up near the instability boundary, so stationary
// operations refuse to run below this margin.
inline double stability_margin_threshold(const Bundle& b) {
    return 1e-6 * b.system.gamma_m;
}

inline void require_stationary(const Bundle& b) {
    const auto rep = assess_stability(b);
    if (!rep.stable || rep.margin < stability_margin_threshold(b))
        throw UnstableParameters("parameters are not safely inside the stable region (margin " +
                                 std::to_string(rep.margin) + " rad/s)");
}

inline Mat4 chi(const Bundle& b, double omega) {
    return inverse(chi_inverse_matrix(b, omega));
}

// T[w] = -sqrt(kappa_L kappa_R) (chi[w])_11
inline ComplexSpectrum transmission(const Bundle& b, std::span<const double> grid) {
    require_stationary(b);
    const double pref = -std::sqrt(b.system.kappa_l * b.system.kappa_r);
    ComplexSpectrum out;
    out.freq.assign(grid.begin(), grid.end());
    out.value.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
        out.value[k] = pref * chi(b, grid[k])(0, 0);
    return out;
}

inline cplx transmission_at(const Bundle& b, double omega) {
    return -std::sqrt(b.system.kappa_l * b.system.kappa_r) * chi(b, omega)(0, 0);
}

// Device-referred output noise S[w]: per-channel transfer weights times bath
// occupations. The detector-side symmetrized density is 1/2 + kappa_R S[w].
inline double output_noise_at(const Bundle& b, double omega) {
    const Mat4 x = chi(b, omega);
    const double kappa = b.system.kappa;
    const double gamma = b.system.gamma_m;
    const double nc = b.baths.n_c_th;
    const double nm = b.baths.n_m_th;
    return kappa * std::norm(x(0, 0)) * nc + kappa * std::norm(x(0, 1)) * (nc + 1.0) +
           gamma * std::norm(x(0, 2)) * nm + gamma * std::norm(x(0, 3)) * (nm + 1.0);
}

struct NoiseSpectra {
    Spectrum device_referred;  // S[w] (quanta, gain-free)
    Spectrum output;           // S_R[w] = 1/2 + kappa_R S[w]
};

inline NoiseSpectra output_noise_spectrum(const Bundle& b, std::span<const double> grid) {
    require_stationary(b);
    NoiseSpectra out;
    out.device_referred.freq.assign(grid.begin(), grid.end());
    out.device_referred.value.resize(grid.size());
    out.output.freq = out.device_referred.freq;
    out.output.value.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double s = output_noise_at(b, grid[k]);
        out.device_referred.value[k] = s;
        out.output.value[k] = 0.5 + b.system.kappa_r * s;
    }
    return out;
}

}  // namespace twotone
