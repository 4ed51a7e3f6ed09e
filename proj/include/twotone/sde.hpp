#pragma once

// Time-domain oracle: integrates the linearized Langevin equations with
// symmetrized (classical-equivalent) Gaussian noise and estimates stationary
// quadrature moments. The state is the real 4-vector (Re d, Im d, Re b, Im b);
// the default integrator applies the exact exponential propagator with the
// exact per-step noise covariance, so there is no dt bias for this linear
// system. Euler-Maruyama is kept behind a flag.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "twotone/linalg.hpp"
#include "twotone/params.hpp"
#include "twotone/response.hpp"
#include "twotone/rng.hpp"

namespace twotone {

using RMat4 = SqMat<double, 4>;

// Real drift A of du/dt = A u + noise, equivalent to the complex 4x4 system.
inline RMat4 real_drift_matrix(const Bundle& b) {
    const double kappa = b.system.kappa;
    const double gamma = b.system.gamma_m;
    const double Delta = b.drive.cavity_detuning;
    const double delta = b.drive.mech_detuning;
    const double gd = b.couplings.g_minus - b.couplings.g_plus;
    const double gs = b.couplings.g_minus + b.couplings.g_plus;
    const double lam = b.drive.lambda_par;
    const double c = std::cos(b.drive.psi), s = std::sin(b.drive.psi);

    RMat4 a;
    a(0, 0) = -0.5 * kappa; a(0, 1) = -Delta;       a(0, 3) = -gd;
    a(1, 0) = Delta;        a(1, 1) = -0.5 * kappa; a(1, 2) = gs;
    a(2, 1) = -gd;          a(2, 2) = -0.5 * gamma - 2.0 * lam * s; a(2, 3) = -delta - 2.0 * lam * c;
    a(3, 0) = gs;           a(3, 2) = delta - 2.0 * lam * c;        a(3, 3) = -0.5 * gamma + 2.0 * lam * s;
    return a;
}

// Intensity of the white-noise forcing: symmetrized input correlators give
// (n + 1/2)/2 per real component and channel.
inline RMat4 noise_intensity_matrix(const Bundle& b) {
    RMat4 n;
    const double cav = b.system.kappa * (b.baths.n_c_th + 0.5) * 0.5;
    const double mech = b.system.gamma_m * (b.baths.n_m_th + 0.5) * 0.5;
    n(0, 0) = cav; n(1, 1) = cav; n(2, 2) = mech; n(3, 3) = mech;
    return n;
}

inline double max_dynamical_rate(const Bundle& b) {
    const double geff = effective_mech_width(b);
    const double par = geff * (1.0 + 2.0 * b.drive.lambda_par / b.system.gamma_m);
    return std::max({b.system.kappa, std::abs(b.drive.cavity_detuning), par});
}

struct SdeOptions {
    std::uint64_t seed = 1;
    double dt = 0.0;             // s; must satisfy dt <= 0.05 / max_dynamical_rate
    std::int64_t n_steps = 0;    // per trajectory
    int n_traj = 1;
    int batches_per_traj = 32;   // batch-means blocks over the retained segment
    std::int64_t store_decimation = 0;  // 0: keep no samples
    bool euler = false;          // Euler-Maruyama instead of the exact OU step
    double burn_in_factor = 10.0;  // discarded time = factor / stability margin
};

// Sums over one contiguous batch of steps: count and the 10 unique second
// moments of (x_c, y_c, x_m, y_m).
struct BatchMoments {
    double count = 0.0;
    std::array<double, 10> sum{};  // upper triangle, row-major: cc,cy,cxm,cym, yy,yxm,yym, mm,mym, ymym
};

struct TrajectoryEnsemble {
    std::uint64_t seed = 0;
    double dt = 0.0;
    std::int64_t n_steps = 0;
    int n_traj = 0;
    std::int64_t burn_in_steps = 0;
    std::vector<std::vector<BatchMoments>> batches;               // [traj][batch]
    std::vector<std::vector<std::array<double, 2>>> samples;      // decimated (X1, X2) per traj
    SqMat<double, 4> covariance;        // of (X1, X2, Xc1, Xc2), x_zp^2 units
    SqMat<double, 4> covariance_sigma;  // batch-means standard error per entry
    bool has_covariance = false;
};

namespace detail {

// order-fixed pairwise reduction; deterministic independently of chunking
inline std::array<double, 10> pairwise_sum_moments(std::vector<std::array<double, 10>> items) {
    if (items.empty()) return {};
    while (items.size() > 1) {
        std::size_t half = (items.size() + 1) / 2;
        for (std::size_t i = 0; i + half < items.size(); ++i)
            for (int k = 0; k < 10; ++k) items[i][k] += items[i + half][k];
        items.resize(half);
    }
    return items[0];
}

inline void accumulate_moments(BatchMoments& b, const std::array<double, 4>& u) {
    int idx = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) b.sum[idx++] += u[i] * u[j];
    b.count += 1.0;
}

// mean second moments -> covariance of (X1, X2, Xc1, Xc2) with
// X1 = 2 x_m, X2 = -2 y_m, Xc1 = 2 x_c, Xc2 = -2 y_c.
inline SqMat<double, 4> quadrature_covariance_from_moments(const std::array<double, 10>& m,
                                                           double count) {
    auto at = [&](int i, int j) {
        if (i > j) std::swap(i, j);
        static constexpr int base[4] = {0, 4, 7, 9};
        return m[base[i] + (j - i)] / count;
    };
    // state order (x_c, y_c, x_m, y_m) -> quadrature order (X1, X2, Xc1, Xc2)
    const int src[4] = {2, 3, 0, 1};
    const double sgn[4] = {2.0, -2.0, 2.0, -2.0};
    SqMat<double, 4> v;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) v(i, j) = sgn[i] * sgn[j] * at(src[i], src[j]);
    return v;
}

}  // namespace detail

inline TrajectoryEnsemble simulate_trajectories(const Bundle& b, const SdeOptions& opt) {
    const auto rep = assess_stability(b);
    if (!rep.stable || rep.margin < stability_margin_threshold(b))
        throw UnstableParameters("cannot simulate stationary noise on an unstable bundle");
    const double dt_max = 0.05 / max_dynamical_rate(b);
    if (!(opt.dt > 0.0) || opt.dt > dt_max)
        throw StepTooLarge("dt must be in (0, " + std::to_string(dt_max) + "] s");
    if (opt.n_steps <= 0 || opt.n_traj <= 0) throw Error("n_steps and n_traj must be positive");

    const RMat4 a = real_drift_matrix(b);
    const RMat4 noise = noise_intensity_matrix(b);

    // propagator and exact per-step noise covariance via the block exponential
    // [[A, N], [0, -A^T]] h  ->  integral = F2^T G1
    RMat4 propagator;
    RMat4 chol;
    if (!opt.euler) {
        SqMat<double, 8> block;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                block(i, j) = -a(i, j) * opt.dt;
                block(i, j + 4) = noise(i, j) * opt.dt;
                block(i + 4, j + 4) = a(j, i) * opt.dt;
            }
        const auto eb = expm(block);
        RMat4 f2, g1;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                g1(i, j) = eb(i, j + 4);
                f2(i, j) = eb(i + 4, j + 4);
            }
        RMat4 q;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += f2(k, i) * g1(k, j);
                q(i, j) = s;
                propagator(i, j) = f2(j, i);
            }
        for (int i = 0; i < 4; ++i)  // symmetrize roundoff
            for (int j = i + 1; j < 4; ++j) {
                const double m = 0.5 * (q(i, j) + q(j, i));
                q(i, j) = q(j, i) = m;
            }
        chol = cholesky_psd(q);
    } else {
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) propagator(i, j) = (i == j ? 1.0 : 0.0) + a(i, j) * opt.dt;
        for (int i = 0; i < 4; ++i) chol(i, i) = std::sqrt(noise(i, i) * opt.dt);
    }

    TrajectoryEnsemble ens;
    ens.seed = opt.seed;
    ens.dt = opt.dt;
    ens.n_steps = opt.n_steps;
    ens.n_traj = opt.n_traj;
    ens.burn_in_steps = static_cast<std::int64_t>(
        std::ceil(opt.burn_in_factor / (rep.margin * opt.dt)));
    ens.batches.resize(opt.n_traj);
    if (opt.store_decimation > 0) ens.samples.resize(opt.n_traj);

    const std::int64_t retained = opt.n_steps - ens.burn_in_steps;
    const int n_batches = retained > 0 ? opt.batches_per_traj : 0;
    const std::int64_t batch_len = n_batches > 0 ? std::max<std::int64_t>(retained / n_batches, 1)
                                                 : 0;

    for (int traj = 0; traj < opt.n_traj; ++traj) {
        PhiloxEngine rng(opt.seed, static_cast<std::uint64_t>(traj));
        std::array<double, 4> u{};
        auto& tb = ens.batches[traj];
        if (n_batches > 0) tb.resize(static_cast<std::size_t>(n_batches));
        for (std::int64_t step = 0; step < opt.n_steps; ++step) {
            std::array<double, 4> z;
            for (double& g : z) g = rng.next_gaussian();
            std::array<double, 4> next{};
            for (int i = 0; i < 4; ++i) {
                double s = 0.0;
                for (int j = 0; j < 4; ++j) s += propagator(i, j) * u[j];
                for (int j = 0; j <= i; ++j) s += chol(i, j) * z[j];
                next[i] = s;
            }
            u = next;
            const std::int64_t k = step - ens.burn_in_steps;
            if (k >= 0 && n_batches > 0) {
                const auto bi = std::min<std::int64_t>(k / batch_len, n_batches - 1);
                detail::accumulate_moments(tb[static_cast<std::size_t>(bi)], u);
            }
            if (opt.store_decimation > 0 && step % opt.store_decimation == 0)
                ens.samples[traj].push_back({2.0 * u[2], -2.0 * u[3]});
        }
    }

    // pooled covariance with batch-means error bars
    std::vector<std::array<double, 10>> all;
    double total_count = 0.0;
    for (const auto& tb : ens.batches)
        for (const auto& bm : tb)
            if (bm.count > 0.0) { all.push_back(bm.sum); total_count += bm.count; }
    if (!all.empty()) {
        const auto pooled = detail::pairwise_sum_moments(all);
        ens.covariance = detail::quadrature_covariance_from_moments(pooled, total_count);
        // spread of per-batch covariances -> standard error of the pooled mean
        SqMat<double, 4> mean_sq;
        std::size_t nb = 0;
        for (const auto& tb : ens.batches)
            for (const auto& bm : tb) {
                if (bm.count <= 0.0) continue;
                const auto v = detail::quadrature_covariance_from_moments(bm.sum, bm.count);
                for (int i = 0; i < 16; ++i) {
                    const double d = v.a[i] - ens.covariance.a[i];
                    mean_sq.a[i] += d * d;
                }
                ++nb;
            }
        if (nb > 1)
            for (int i = 0; i < 16; ++i)
                ens.covariance_sigma.a[i] =
                    std::sqrt(mean_sq.a[i] / static_cast<double>(nb - 1) / static_cast<double>(nb));
        ens.has_covariance = true;
    }
    return ens;
}

struct VarianceEstimate {
    double value = 0.0;
    double sigma = 0.0;
    std::size_t n_batches = 0;
};

// Time-and-ensemble average of X_phi^2 over the retained segment, with a
// batch-means error bar. Batches must exceed the correlation time for the
// sigma to be meaningful; the batch count is chosen by the caller.
inline VarianceEstimate estimate_variance_from_trajectories(const TrajectoryEnsemble& ens,
                                                            double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    std::vector<double> means;
    for (const auto& tb : ens.batches)
        for (const auto& bm : tb) {
            if (bm.count <= 0.0) continue;
            // X_phi = 2 (x_m cos phi - y_m sin phi); moments 7: x_m^2, 8: x_m y_m, 9: y_m^2
            const double xx = bm.sum[7] / bm.count;
            const double xy = bm.sum[8] / bm.count;
            const double yy = bm.sum[9] / bm.count;
            means.push_back(4.0 * (c * c * xx - 2.0 * c * s * xy + s * s * yy));
        }
    if (means.size() < 2)
        throw NonStationarySegment("no stationary batches available after burn-in");
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(means.size() - 1);
    VarianceEstimate out;
    out.value = mean;
    out.sigma = std::sqrt(var / static_cast<double>(means.size()));
    out.n_batches = means.size();
    return out;
}

// Noise-free propagation from an initial condition; used for decay checks.
inline std::vector<std::array<double, 4>> propagate_deterministic(const Bundle& b,
                                                                  std::array<double, 4> u0,
                                                                  double dt,
                                                                  std::int64_t n_steps,
                                                                  std::int64_t decimation = 1) {
    const RMat4 a = real_drift_matrix(b);
    RMat4 step_m = a;
    for (double& x : step_m.a) x *= dt;
    const RMat4 e = expm(step_m);
    std::vector<std::array<double, 4>> out;
    out.reserve(static_cast<std::size_t>(n_steps / std::max<std::int64_t>(decimation, 1)) + 1);
    std::array<double, 4> u = u0;
    for (std::int64_t k = 0; k < n_steps; ++k) {
        std::array<double, 4> next{};
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 4; ++j) s += e(i, j) * u[j];
            next[i] = s;
        }
        u = next;
        if (k % std::max<std::int64_t>(decimation, 1) == 0) out.push_back(u);
    }
    return out;
}

}  // namespace twotone
