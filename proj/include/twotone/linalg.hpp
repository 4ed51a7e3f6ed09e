#pragma once

// Small dense linear algebra for fixed tiny dimensions (4x4 complex response
// matrices, 8x8 real exponentials, few-parameter normal equations). Direct
// pivoted elimination everywhere; no iterative solvers.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "twotone/constants.hpp"
#include "twotone/errors.hpp"

namespace twotone {

template <class T, std::size_t N>
struct SqMat {
    std::array<T, N * N> a{};

    T& operator()(std::size_t i, std::size_t j) { return a[i * N + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return a[i * N + j]; }

    static SqMat identity() {
        SqMat m;
        for (std::size_t i = 0; i < N; ++i) m(i, i) = T(1);
        return m;
    }
};

using Mat4 = SqMat<cplx, 4>;
using Vec4 = std::array<cplx, 4>;

template <class T, std::size_t N>
SqMat<T, N> operator*(const SqMat<T, N>& x, const SqMat<T, N>& y) {
    SqMat<T, N> r;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < N; ++k) {
            const T xik = x(i, k);
            for (std::size_t j = 0; j < N; ++j) r(i, j) += xik * y(k, j);
        }
    return r;
}

template <class T, std::size_t N>
std::array<T, N> operator*(const SqMat<T, N>& m, const std::array<T, N>& v) {
    std::array<T, N> r{};
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) r[i] += m(i, j) * v[j];
    return r;
}

namespace detail {
inline double mag(double x) { return std::abs(x); }
inline double mag(const cplx& x) { return std::abs(x.real()) + std::abs(x.imag()); }
}  // namespace detail

// In-place LU with partial pivoting; solves M X = B for B with `cols` columns
// stored row-major in `rhs`. Throws SingularMatrix when a pivot underflows
// relative to the matrix scale.
template <class T, std::size_t N>
void lu_solve_inplace(SqMat<T, N> m, T* rhs, std::size_t cols) {
    double scale = 0.0;
    for (const T& x : m.a) scale = std::max(scale, detail::mag(x));
    if (scale == 0.0) throw SingularMatrix("zero matrix");

    for (std::size_t k = 0; k < N; ++k) {
        std::size_t piv = k;
        double best = detail::mag(m(k, k));
        for (std::size_t i = k + 1; i < N; ++i) {
            const double cand = detail::mag(m(i, k));
            if (cand > best) { best = cand; piv = i; }
        }
        if (best < 1e-14 * scale)
            throw SingularMatrix("pivot " + std::to_string(k) + " below threshold");
        if (piv != k) {
            for (std::size_t j = 0; j < N; ++j) std::swap(m(k, j), m(piv, j));
            for (std::size_t j = 0; j < cols; ++j) std::swap(rhs[k * cols + j], rhs[piv * cols + j]);
        }
        for (std::size_t i = k + 1; i < N; ++i) {
            const T f = m(i, k) / m(k, k);
            if (f == T(0)) continue;
            for (std::size_t j = k; j < N; ++j) m(i, j) -= f * m(k, j);
            for (std::size_t j = 0; j < cols; ++j) rhs[i * cols + j] -= f * rhs[k * cols + j];
        }
    }
    for (std::size_t ii = N; ii-- > 0;) {
        for (std::size_t j = 0; j < cols; ++j) {
            T s = rhs[ii * cols + j];
            for (std::size_t k = ii + 1; k < N; ++k) s -= m(ii, k) * rhs[k * cols + j];
            rhs[ii * cols + j] = s / m(ii, ii);
        }
    }
}

template <class T, std::size_t N>
std::array<T, N> solve(const SqMat<T, N>& m, std::array<T, N> b) {
    lu_solve_inplace(m, b.data(), 1);
    return b;
}

template <class T, std::size_t N>
SqMat<T, N> inverse(const SqMat<T, N>& m) {
    SqMat<T, N> inv = SqMat<T, N>::identity();
    lu_solve_inplace(m, inv.a.data(), N);
    return inv;
}

template <class T, std::size_t N>
T determinant(SqMat<T, N> m) {
    T det(1);
    for (std::size_t k = 0; k < N; ++k) {
        std::size_t piv = k;
        double best = detail::mag(m(k, k));
        for (std::size_t i = k + 1; i < N; ++i)
            if (detail::mag(m(i, k)) > best) { best = detail::mag(m(i, k)); piv = i; }
        if (best == 0.0) return T(0);
        if (piv != k) {
            for (std::size_t j = 0; j < N; ++j) std::swap(m(k, j), m(piv, j));
            det = -det;
        }
        det *= m(k, k);
        for (std::size_t i = k + 1; i < N; ++i) {
            const T f = m(i, k) / m(k, k);
            for (std::size_t j = k; j < N; ++j) m(i, j) -= f * m(k, j);
        }
    }
    return det;
}

// Dynamic real solver for the few-parameter normal equations (n <= ~16).
inline std::vector<double> solve_dense(std::vector<double> m, std::vector<double> b) {
    const std::size_t n = b.size();
    double scale = 0.0;
    for (double x : m) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) throw SingularMatrix("zero matrix");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(m[i * n + k]) > std::abs(m[piv * n + k])) piv = i;
        if (std::abs(m[piv * n + k]) < 1e-14 * scale)
            throw SingularMatrix("singular normal equations");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m[k * n + j], m[piv * n + j]);
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = m[i * n + k] / m[k * n + k];
            if (f == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
            b[i] -= f * b[k];
        }
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= m[ii * n + k] * b[k];
        b[ii] = s / m[ii * n + ii];
    }
    return b;
}

// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
// The scaled norm is kept below 1/2, where 24 terms reach double precision.
template <std::size_t N>
SqMat<double, N> expm(SqMat<double, N> m) {
    double norm = 0.0;  // max row sum
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += std::abs(m(i, j));
        norm = std::max(norm, s);
    }
    int squarings = 0;
    while (norm > 0.5 && squarings < 60) {
        for (double& x : m.a) x *= 0.5;
        norm *= 0.5;
        ++squarings;
    }
    SqMat<double, N> result = SqMat<double, N>::identity();
    SqMat<double, N> term = SqMat<double, N>::identity();
    for (int k = 1; k <= 24; ++k) {
        term = term * m;
        const double inv_k = 1.0 / static_cast<double>(k);
        for (double& x : term.a) x *= inv_k;
        for (std::size_t i = 0; i < N * N; ++i) result.a[i] += term.a[i];
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

// Cholesky factor of a symmetric PSD matrix. Small negative diagonals from
// roundoff are clamped to zero; a genuinely indefinite input throws.
template <std::size_t N>
SqMat<double, N> cholesky_psd(const SqMat<double, N>& m) {
    double scale = 0.0;
    for (std::size_t i = 0; i < N; ++i) scale = std::max(scale, std::abs(m(i, i)));
    SqMat<double, N> l;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s < -1e-10 * scale) throw Error("matrix not positive semidefinite");
                l(i, i) = std::sqrt(std::max(s, 0.0));
            } else {
                l(i, j) = (l(j, j) > 0.0) ? s / l(j, j) : 0.0;
            }
        }
    }
    return l;
}

namespace detail {

// char poly of a 4x4, p(s) = s^4 + c3 s^3 + c2 s^2 + c1 s + c0, with the
// coefficients taken from sums of principal minors. Far better conditioned
// than trace-power recursions when the eigenvalues span many decades.
inline std::array<cplx, 4> char_poly4(const Mat4& m) {
    const cplx c3 = -(m(0, 0) + m(1, 1) + m(2, 2) + m(3, 3));
    cplx c2(0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) c2 += m(i, i) * m(j, j) - m(i, j) * m(j, i);
    cplx c1(0.0);
    for (int drop = 0; drop < 4; ++drop) {
        int r[3], k = 0;
        for (int i = 0; i < 4; ++i)
            if (i != drop) r[k++] = i;
        const cplx det3 =
            m(r[0], r[0]) * (m(r[1], r[1]) * m(r[2], r[2]) - m(r[1], r[2]) * m(r[2], r[1])) -
            m(r[0], r[1]) * (m(r[1], r[0]) * m(r[2], r[2]) - m(r[1], r[2]) * m(r[2], r[0])) +
            m(r[0], r[2]) * (m(r[1], r[0]) * m(r[2], r[1]) - m(r[1], r[1]) * m(r[2], r[0]));
        c1 -= det3;
    }
    const cplx c0 = determinant(m);
    return {c0, c1, c2, c3};
}

// One Newton step on det(M - sI) evaluated through LU at the shift itself:
// s <- s + 1/tr((M - sI)^-1). Refines roots of the characteristic polynomial
// to machine precision independently of the polynomial's conditioning.
inline cplx refine_eigenvalue(const Mat4& m, cplx s, double scale) {
    for (int it = 0; it < 12; ++it) {
        Mat4 shifted = m;
        for (int d = 0; d < 4; ++d) shifted(d, d) -= s;
        Mat4 inv;
        try {
            inv = inverse(shifted);
        } catch (const SingularMatrix&) {
            return s;  // shift is an eigenvalue to working precision
        }
        const cplx trace = inv(0, 0) + inv(1, 1) + inv(2, 2) + inv(3, 3);
        if (trace == cplx(0.0)) return s;
        const cplx step = 1.0 / trace;
        s += step;
        if (std::abs(step) <= 1e-15 * std::max(std::abs(s), 1e-3 * scale)) break;
    }
    return s;
}

}  // namespace detail

// All roots of s^4 + c3 s^3 + c2 s^2 + c1 s + c0 by Durand-Kerner iteration
// with Newton polish. Coefficients are rescaled first so rates spanning many
// decades stay well conditioned.
inline std::array<cplx, 4> quartic_roots(std::array<cplx, 4> c) {
    double sigma = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double m = std::abs(c[k]);
        if (m > 0.0) sigma = std::max(sigma, std::pow(m, 1.0 / (4 - k)));
    }
    if (sigma == 0.0) return {cplx(0), cplx(0), cplx(0), cplx(0)};
    // rescale s -> sigma * t
    std::array<cplx, 4> cs;
    double p = 1.0;
    for (int k = 3; k >= 0; --k) {
        p *= sigma;  // sigma^(4-k)
        cs[k] = c[k] / p;
    }
    auto eval = [&](cplx t) { return (((t + cs[3]) * t + cs[2]) * t + cs[1]) * t + cs[0]; };
    auto deriv = [&](cplx t) { return ((4.0 * t + 3.0 * cs[3]) * t + 2.0 * cs[2]) * t + cs[1]; };

    std::array<cplx, 4> w;
    const cplx seed(0.4, 0.9);
    w[0] = seed;
    for (int k = 1; k < 4; ++k) w[k] = w[k - 1] * seed;
    for (int it = 0; it < 300; ++it) {
        double step = 0.0;
        for (int k = 0; k < 4; ++k) {
            cplx denom(1.0, 0.0);
            for (int j = 0; j < 4; ++j)
                if (j != k) denom *= (w[k] - w[j]);
            if (denom == cplx(0.0)) denom = cplx(1e-30, 0.0);
            const cplx d = eval(w[k]) / denom;
            w[k] -= d;
            step = std::max(step, std::abs(d));
        }
        if (step < 1e-15) break;
    }
    for (int k = 0; k < 4; ++k) {  // Newton polish
        for (int it = 0; it < 6; ++it) {
            const cplx f = eval(w[k]);
            const cplx df = deriv(w[k]);
            if (std::abs(df) == 0.0) break;
            const cplx d = f / df;
            w[k] -= d;
            if (std::abs(d) < 1e-16 * std::max(1.0, std::abs(w[k]))) break;
        }
    }
    for (auto& r : w) r *= sigma;
    return w;
}

inline std::array<cplx, 4> eigenvalues4(const Mat4& m) {
    auto roots = quartic_roots(detail::char_poly4(m));
    double scale = 0.0;
    for (const auto& r : roots) scale = std::max(scale, std::abs(r));
    for (auto& r : roots) r = detail::refine_eigenvalue(m, r, scale);
    return roots;
}

}  // namespace twotone
