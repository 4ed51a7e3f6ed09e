#pragma once

#include <cmath>
#include <complex>

namespace twotone {

using cplx = std::complex<double>;

inline constexpr double hbar = 1.054571817e-34;  // J s (CODATA 2018)
inline constexpr double k_boltzmann = 1.380649e-23;  // J/K
inline constexpr double two_pi = 6.283185307179586476925286766559;

constexpr double hz_to_rad(double f_hz) { return two_pi * f_hz; }
constexpr double rad_to_hz(double w_rad) { return w_rad / two_pi; }
constexpr double deg_to_rad(double deg) { return deg * (two_pi / 360.0); }
constexpr double rad_to_deg(double rad) { return rad * (360.0 / two_pi); }

// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
    const double pi = two_pi / 2.0;
    double w = std::remainder(a, two_pi);
    if (w <= -pi) w += two_pi;
    return w;
}

}  // namespace twotone
