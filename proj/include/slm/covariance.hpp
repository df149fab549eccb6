/**
 * @file covariance.hpp
 * @brief First-order correction pair (ghat_t, p_t): spectral evolution with
 *        two independent backends, stationary limits, and the inverse
 *        transform back to real space.
 *
 * The pair solves, on a frequency grid,
 *     d ghat/dt = 2 j(xi, t) ghat + 2 q_t Jhat_t(xi),
 *     d p   /dt = (kappa+ - m - 2 kappa- q_t) p - integral ghat_t ahat- dxi,
 * with j and Jhat from `meanfield`.  The `duhamel` backend uses variation of
 * constants with the closed-form exponent (no ODE truncation error in the
 * homogeneous part); `rk4` is an independent fixed-step integrator used for
 * cross-validation.  Both use the same grid weights for the p coupling term,
 * which also evaluate the stationary integral, so trajectory limits and
 * stationary formulas agree to quadrature-error cancellation.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "meanfield.hpp"
#include "special_math.hpp"

namespace slm {

enum class EvolveBackend { duhamel, rk4 };

/// Frequency grid with quadrature weights and cached kernel transforms at the
/// nodes.  Radial grids store radii (geometrically refined toward xi = 0,
/// where the spectral gap is smallest); non-radial grids store flattened
/// dim-tuples from the cube-shell rule.
struct SpectralGrid {
    int dim = 1;
    bool radial = true;
    int order = 16;                  ///< GL order (radial) / per-axis level (boxes)
    double r_max = 0.0;
    std::vector<double> points;      ///< radii, or flattened coordinates
    std::vector<double> weights;
    std::vector<double> a_plus_hat;  ///< ahat+ at nodes
    std::vector<double> a_plus_gap;  ///< kappa+ - ahat+ at nodes (stable form)
    std::vector<double> a_minus_hat; ///< ahat- at nodes

    size_t size() const { return weights.size(); }

    /// Largest |x| the inverse transform can resolve on this grid: about
    /// two-thirds of the node density per unit frequency in the outer octave.
    double resolution_limit() const { return 2.0 * order / (3.0 * r_max); }
};

/// Trajectory sample: time, ghat_t at the grid nodes, and the scalar p_t.
struct SpectralState {
    double t = 0.0;
    std::vector<double> g_hat;
    double p = 0.0;
};

/// Stationary limits on a grid; g_star holds optional real-space samples.
struct StationaryPair {
    SpectralGrid grid;
    std::vector<double> g_hat_star;
    double p_star = 0.0;
    std::vector<double> g_star;
};

namespace detail {

inline void run_chunked(size_t n, int threads, const std::function<void(size_t, size_t)> &body) {
    if (threads <= 1 || n < 64) {
        body(0, n);
        return;
    }
    const size_t nt = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const size_t chunk = (n + nt - 1) / nt;
    for (size_t c = 0; c < nt; ++c) {
        const size_t lo = c * chunk;
        const size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) {
            break;
        }
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto &th : pool) {
        th.join();
    }
}

} // namespace detail

/// Build the spectral grid for a model: r_max grows geometrically until the
/// transform tails are negligible (or the kernels' resolved band is reached),
/// then a near-origin-refined rule is laid down.  Kernel transforms are
/// evaluated once per node and cached.
inline SpectralGrid make_spectral_grid(const ModelParams &p, double r_max_override = 0.0,
                                       double r_min = 1e-9, int order = 16) {
    SpectralGrid g;
    g.dim = p.dim();
    g.radial = p.a_plus.is_radial && p.a_minus.is_radial;
    g.order = order;

    const double q_weight = std::max(p.q_star(), 0.0);
    double r_max = r_max_override;
    if (!(r_max > 0.0)) {
        const double scale = p.kappa_plus() + q_weight * p.kappa_minus();
        const double band =
            std::min(p.a_plus.resolved_band, p.a_minus.resolved_band);
        r_max = 0.25;
        for (int i = 0; i < 400; ++i) {
            if (r_max >= band) {
                r_max = band;
                break;
            }
            const double tail = p.a_plus.tail_bound(r_max) +
                                q_weight * p.a_minus.tail_bound(r_max);
            if (tail <= 1e-9 * scale) {
                break;
            }
            r_max *= 1.25;
        }
    }
    g.r_max = r_max;

    if (g.radial) {
        const RadialQuadrature q = make_radial_quadrature(g.dim, r_max, r_min, order);
        g.points = q.nodes;
        g.weights = q.weights;
        g.a_plus_hat.reserve(g.points.size());
        g.a_plus_gap.reserve(g.points.size());
        g.a_minus_hat.reserve(g.points.size());
        for (double r : g.points) {
            g.a_plus_hat.push_back(p.a_plus.fourier_radial(r));
            g.a_plus_gap.push_back(p.a_plus.gap_radial(r));
            g.a_minus_hat.push_back(p.a_minus.fourier_radial(r));
        }
    } else {
        const CubeShellGrid q = make_cube_shell_grid(g.dim, r_max, 8, r_min);
        g.order = 8;
        g.weights = q.weights;
        g.points.reserve(q.points.size() * g.dim);
        for (const auto &pt : q.points) {
            for (int d = 0; d < g.dim; ++d) {
                g.points.push_back(pt[d]);
            }
            const std::span<const double> xi(pt.data(), g.dim);
            g.a_plus_hat.push_back(p.a_plus.fourier(xi));
            g.a_plus_gap.push_back(p.a_plus.fourier_gap(xi));
            g.a_minus_hat.push_back(p.a_minus.fourier(xi));
        }
    }
    return g;
}

/// Zero initial data (Poisson initial state): ghat_0 = 0, p_0 = 0.
inline SpectralState make_initial_state(const SpectralGrid &grid) {
    SpectralState s;
    s.t = 0.0;
    s.g_hat.assign(grid.size(), 0.0);
    s.p = 0.0;
    return s;
}

/// ghat*(xi) = q* Jhat*(xi) / (kappa+ - Jhat*(xi)) from precomputed transform
/// values; the denominator uses the cancellation-free gap of a+.
inline double stationary_g_from_hats(const ModelParams &p, double a_plus_hat,
                                     double a_plus_gap, double a_minus_hat) {
    const double q_star = p.q_star();
    const double j_star_hat = a_plus_hat - q_star * a_minus_hat;
    const double denom = a_plus_gap + q_star * a_minus_hat; // kappa+ - Jhat*
    if (!(denom > 0.0)) {
        throw AssumptionViolationError(
            "stationary_g_hat: spectral gap kappa+ - Jhat*(xi) is not positive "
            "(denominator " +
            std::to_string(denom) + ")");
    }
    return q_star * j_star_hat / denom;
}

/// Stationary spectral covariance ghat*(xi).
inline double stationary_g_hat(const ModelParams &p, std::span<const double> xi) {
    return stationary_g_from_hats(p, p.a_plus.fourier(xi), p.a_plus.fourier_gap(xi),
                                  p.a_minus.fourier(xi));
}

/// Stationary correction p* = -(1/kappa-) integral Jhat*/(kappa+ - Jhat*) ahat- dxi,
/// evaluated with the supplied grid's weights and cached transforms.
inline double stationary_p(const SpectralGrid &grid, const ModelParams &p) {
    const double q_star = p.q_star();
    double acc = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double g_star = stationary_g_from_hats(p, grid.a_plus_hat[i],
                                                     grid.a_plus_gap[i],
                                                     grid.a_minus_hat[i]);
        // Jhat*/(kappa+ - Jhat*) = ghat*/q*.
        acc += grid.weights[i] * (g_star / q_star) * grid.a_minus_hat[i];
    }
    return -acc / p.kappa_minus();
}

/// Convenience overload constructing the default grid.
inline double stationary_p(const ModelParams &p) {
    return stationary_p(make_spectral_grid(p), p);
}

/// Stationary pair (ghat*, p*) sampled on the supplied grid.
inline StationaryPair make_stationary_pair(const ModelParams &p, SpectralGrid grid) {
    StationaryPair sp;
    sp.g_hat_star.reserve(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        sp.g_hat_star.push_back(stationary_g_from_hats(
            p, grid.a_plus_hat[i], grid.a_plus_gap[i], grid.a_minus_hat[i]));
    }
    sp.p_star = stationary_p(grid, p);
    sp.grid = std::move(grid);
    return sp;
}

inline StationaryPair make_stationary_pair(const ModelParams &p) {
    return make_stationary_pair(p, make_spectral_grid(p));
}

namespace detail {

/// One duhamel panel: advance ghat through the Gauss-Legendre sub-times of
/// the p quadrature using the exact one-panel recursion
///   ghat(tk) = e^{2E(tk-1, tk)} ghat(tk-1)
///              + 2 integral e^{2E(tau, tk)} q_tau Jhat_tau dtau,
/// then update p with the integrating factor Phi(s,t) = e^{-(kappa+-m)(t-s)}
/// (q_t/q_s)^2 and the same sub-times.
inline void duhamel_panel(const SpectralGrid &grid, const MeanFieldTrajectory &traj,
                          SpectralState &state, double t1, int threads) {
    static const GaussLegendre gl = gauss_legendre(12);
    const double t0 = state.t;
    const double mid = 0.5 * (t0 + t1);
    const double half = 0.5 * (t1 - t0);
    const size_t n = grid.size();

    std::array<double, 13> sub{};
    for (int k = 0; k < 12; ++k) {
        sub[k] = mid + half * gl.x[k];
    }
    sub[12] = t1;

    // Per-node contributions to the coupling integral at each sub-time,
    // reduced in index order after the parallel sweep (deterministic for any
    // thread count).
    std::vector<double> contrib(12 * n, 0.0);

    detail::run_chunked(n, threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            const double gap = grid.a_plus_gap[i];
            const double ap = grid.a_plus_hat[i];
            const double am = grid.a_minus_hat[i];
            double g = state.g_hat[i];
            double prev = t0;
            for (int k = 0; k < 13; ++k) {
                const double tk = sub[k];
                if (tk > prev) {
                    const double decay =
                        std::exp(2.0 * traj.exponent_from_hats(prev, tk, gap, am));
                    const double forcing = adaptive_simpson(
                        [&](double u) {
                            const double qu = traj.q_at(u);
                            return std::exp(2.0 *
                                            traj.exponent_from_hats(u, tk, gap, am)) *
                                   2.0 * qu * (ap - qu * am);
                        },
                        prev, tk, 1e-12);
                    g = decay * g + forcing;
                    prev = tk;
                }
                if (k < 12) {
                    contrib[static_cast<size_t>(k) * n + i] = grid.weights[i] * g * am;
                }
            }
            state.g_hat[i] = g;
        }
    });

    std::array<double, 12> coupling{};
    for (int k = 0; k < 12; ++k) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
            acc += contrib[static_cast<size_t>(k) * n + i];
        }
        coupling[k] = acc;
    }

    const double gamma = traj.growth_rate();
    auto phi = [&](double s, double t) {
        return std::exp(-gamma * (t - s) + 2.0 * traj.log_q_ratio(s, t));
    };
    double p_new = phi(t0, t1) * state.p;
    for (int k = 0; k < 12; ++k) {
        p_new -= half * gl.w[k] * phi(sub[k], t1) * coupling[k];
    }
    state.p = p_new;
    state.t = t1;

    if (!std::isfinite(state.p) || !std::isfinite(state.g_hat[0])) {
        throw IntegrationFailureError("duhamel panel produced a non-finite state", t1);
    }
}

/// Time derivative of the joint state (ghat nodes, p) at time t.
inline void spectral_rhs(const SpectralGrid &grid, const MeanFieldTrajectory &traj,
                         double t, const std::vector<double> &g, double p,
                         std::vector<double> &dg, double &dp, int threads) {
    const size_t n = grid.size();
    const double q = traj.q_at(t);
    detail::run_chunked(n, threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            const double j =
                traj.j_from_hats(t, grid.a_plus_hat[i], grid.a_minus_hat[i]);
            const double j_hat_t = grid.a_plus_hat[i] - q * grid.a_minus_hat[i];
            dg[i] = 2.0 * j * g[i] + 2.0 * q * j_hat_t;
        }
    });
    double coupling = 0.0;
    for (size_t i = 0; i < n; ++i) {
        coupling += grid.weights[i] * g[i] * grid.a_minus_hat[i];
    }
    dp = (traj.growth_rate() - 2.0 * traj.params.kappa_minus() * q) * p - coupling;
}

/// Classical RK4 with fixed step h from state.t to t_end (last step partial).
inline SpectralState rk4_run(const SpectralGrid &grid, const MeanFieldTrajectory &traj,
                             SpectralState state, double t_end, double h,
                             int threads) {
    const size_t n = grid.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), scratch(n);
    double kp1 = 0.0, kp2 = 0.0, kp3 = 0.0, kp4 = 0.0;
    while (state.t < t_end - 1e-14 * std::max(1.0, t_end)) {
        const double step = std::min(h, t_end - state.t);
        if (!(step > 0.0)) {
            throw IntegrationFailureError("rk4 step size underflow", state.t);
        }
        const double t = state.t;
        spectral_rhs(grid, traj, t, state.g_hat, state.p, k1, kp1, threads);
        for (size_t i = 0; i < n; ++i) {
            scratch[i] = state.g_hat[i] + 0.5 * step * k1[i];
        }
        spectral_rhs(grid, traj, t + 0.5 * step, scratch, state.p + 0.5 * step * kp1,
                     k2, kp2, threads);
        for (size_t i = 0; i < n; ++i) {
            scratch[i] = state.g_hat[i] + 0.5 * step * k2[i];
        }
        spectral_rhs(grid, traj, t + 0.5 * step, scratch, state.p + 0.5 * step * kp2,
                     k3, kp3, threads);
        for (size_t i = 0; i < n; ++i) {
            scratch[i] = state.g_hat[i] + step * k3[i];
        }
        spectral_rhs(grid, traj, t + step, scratch, state.p + step * kp3, k4, kp4,
                     threads);
        for (size_t i = 0; i < n; ++i) {
            state.g_hat[i] +=
                step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        state.p += step / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4);
        state.t = t + step;
        if (!std::isfinite(state.p)) {
            throw IntegrationFailureError("rk4 produced a non-finite state", state.t);
        }
    }
    state.t = t_end;
    return state;
}

inline double state_distance(const SpectralState &a, const SpectralState &b) {
    double d = std::abs(a.p - b.p);
    for (size_t i = 0; i < a.g_hat.size(); ++i) {
        d = std::max(d, std::abs(a.g_hat[i] - b.g_hat[i]));
    }
    return d;
}

} // namespace detail

/// Advance the state to t_end.  `duhamel`: variation-of-constants panels with
/// closed-form exponents (panel length 0.5/(kappa+ - m)).  `rk4`: fixed step
/// h = 1e-2/kappa+, halved until the result changes by < 1e-8.
inline SpectralState evolve(const SpectralGrid &grid, const MeanFieldTrajectory &traj,
                            const SpectralState &state, double t_end,
                            EvolveBackend backend, int threads = 1) {
    if (state.g_hat.size() != grid.size()) {
        throw InvalidParameterError("evolve: state/grid size mismatch");
    }
    if (t_end < state.t) {
        throw InvalidParameterError("evolve: t_end precedes the state time");
    }
    if (t_end == state.t) {
        return state;
    }
    if (backend == EvolveBackend::duhamel) {
        SpectralState s = state;
        const double panel = 0.5 / traj.growth_rate();
        while (s.t < t_end - 1e-14 * std::max(1.0, t_end)) {
            detail::duhamel_panel(grid, traj, s, std::min(s.t + panel, t_end), threads);
        }
        s.t = t_end;
        return s;
    }
    double h = 1e-2 / traj.params.kappa_plus();
    SpectralState coarse = detail::rk4_run(grid, traj, state, t_end, h, threads);
    for (int halving = 0; halving < 8; ++halving) {
        h *= 0.5;
        SpectralState fine = detail::rk4_run(grid, traj, state, t_end, h, threads);
        if (detail::state_distance(coarse, fine) < 1e-8) {
            return fine;
        }
        coarse = std::move(fine);
    }
    throw IntegrationFailureError("rk4 step refinement did not converge", t_end);
}

/// Sup norm of the right-hand sides at the current state (stationarity
/// residual used by the stopping rule).
inline double stationarity_residual(const SpectralGrid &grid,
                                    const MeanFieldTrajectory &traj,
                                    const SpectralState &state) {
    const size_t n = grid.size();
    std::vector<double> dg(n);
    double dp = 0.0;
    detail::spectral_rhs(grid, traj, state.t, state.g_hat, state.p, dg, dp, 1);
    double r = std::abs(dp);
    for (double v : dg) {
        r = std::max(r, std::abs(v));
    }
    return r;
}

/// Run until the stationarity residual falls below 1e-8 or
/// t = 200/(kappa+ - m), whichever comes first.
inline SpectralState evolve_to_stationary(const SpectralGrid &grid,
                                          const MeanFieldTrajectory &traj,
                                          const SpectralState &state,
                                          EvolveBackend backend, int threads = 1) {
    const double gamma = traj.growth_rate();
    const double t_max = 200.0 / gamma;
    SpectralState s = state;
    while (s.t < t_max) {
        s = evolve(grid, traj, s, std::min(s.t + 1.0 / gamma, t_max), backend, threads);
        if (stationarity_residual(grid, traj, s) < 1e-8) {
            break;
        }
    }
    return s;
}

/// Inverse transform g*(x) = integral ghat*(xi) e^{2 pi i x.xi} dxi evaluated
/// as a cosine (radial: cos/J0/sinc) sum over the grid.  For radial grids
/// x_points are |x| values; otherwise flattened dim-tuples.
inline std::vector<double> inverse_transform_g(const SpectralGrid &grid,
                                               std::span<const double> g_hat_star,
                                               std::span<const double> x_points) {
    if (g_hat_star.size() != grid.size()) {
        throw InvalidParameterError("inverse_transform_g: value/grid size mismatch");
    }
    const double x_limit = grid.resolution_limit();
    std::vector<double> out;
    if (grid.radial) {
        if (grid.dim > 3) {
            throw InvalidParameterError(
                "inverse_transform_g: radial path supports dim <= 3");
        }
        auto omega = [dim = grid.dim](double z) {
            switch (dim) {
            case 1:
                return std::cos(z);
            case 2:
                return std::cyl_bessel_j(0.0, std::abs(z));
            default:
                return (std::abs(z) < 1e-8) ? 1.0 : std::sin(z) / z;
            }
        };
        for (double x : x_points) {
            if (std::abs(x) > x_limit) {
                throw ResolutionError(
                    "inverse_transform_g: |x| = " + std::to_string(std::abs(x)) +
                    " beyond the grid resolution limit " + std::to_string(x_limit));
            }
            double acc = 0.0;
            for (size_t i = 0; i < grid.size(); ++i) {
                acc += grid.weights[i] * g_hat_star[i] *
                       omega(2.0 * M_PI * grid.points[i] * std::abs(x));
            }
            out.push_back(acc);
        }
        return out;
    }
    const size_t npts = x_points.size() / grid.dim;
    for (size_t k = 0; k < npts; ++k) {
        const double *x = &x_points[k * grid.dim];
        double nrm = 0.0;
        for (int d = 0; d < grid.dim; ++d) {
            nrm += x[d] * x[d];
        }
        if (std::sqrt(nrm) > x_limit) {
            throw ResolutionError("inverse_transform_g: |x| beyond the grid "
                                  "resolution limit " +
                                  std::to_string(x_limit));
        }
        double acc = 0.0;
        for (size_t i = 0; i < grid.size(); ++i) {
            double dot = 0.0;
            for (int d = 0; d < grid.dim; ++d) {
                dot += grid.points[i * grid.dim + d] * x[d];
            }
            acc += grid.weights[i] * g_hat_star[i] * std::cos(2.0 * M_PI * dot);
        }
        out.push_back(acc);
    }
    return out;
}

/// Overload taking the stationary pair (fills nothing into sp.g_star).
inline std::vector<double> inverse_transform_g(const StationaryPair &sp,
                                               std::span<const double> x_points) {
    return inverse_transform_g(sp.grid, sp.g_hat_star, x_points);
}

} // namespace slm
