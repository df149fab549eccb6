/**
 * @file test_covariance.cpp
 * @brief Spectral covariance evolution and stationary limits: backend
 *        cross-validation, quadrature pairings, pinned oracle values.
 */

#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "slm/covariance.hpp"

namespace {

using namespace slm;

/// Default instance: Gaussian kernels, kappa+- = 1, sigma = 1, m = 0.5.
ModelParams default_params(int dim, double m = 0.5) {
    return ModelParams(make_gaussian_kernel(dim, 1.0, 1.0),
                       make_gaussian_kernel(dim, 1.0, 1.0), m);
}

double sup_diff_to_stationary(const SpectralGrid &grid, const ModelParams &p,
                              const SpectralState &s) {
    double sup = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double star = stationary_g_from_hats(
            p, grid.a_plus_hat[i], grid.a_plus_gap[i], grid.a_minus_hat[i]);
        sup = std::max(sup, std::abs(s.g_hat[i] - star));
    }
    return sup;
}

} // namespace

TEST_SUITE("covariance") {

TEST_CASE("spectral grid: positive weights, origin refinement, cached transforms") {
    const ModelParams p = default_params(1);
    const SpectralGrid grid = make_spectral_grid(p);
    REQUIRE(grid.size() > 0);
    CHECK(grid.radial);
    double min_node = 1e300;
    for (size_t i = 0; i < grid.size(); ++i) {
        CHECK(grid.weights[i] > 0.0);
        min_node = std::min(min_node, grid.points[i]);
    }
    CHECK(min_node < 1e-6); // refined toward xi = 0
    // Truncation keeps only negligible transform mass outside r_max.
    CHECK(p.a_plus.tail_bound(grid.r_max) <= 1e-8 * p.kappa_plus());
    // Cached hats equal direct kernel evaluations.
    for (size_t i = 0; i < grid.size(); i += grid.size() / 7 + 1) {
        CHECK(grid.a_plus_hat[i] ==
              doctest::Approx(p.a_plus.fourier_radial(grid.points[i])).epsilon(1e-15));
        CHECK(grid.a_minus_hat[i] ==
              doctest::Approx(p.a_minus.fourier_radial(grid.points[i])).epsilon(1e-15));
    }
}

TEST_CASE("stationary_g_hat: limiting values and pinned oracle") {
    const ModelParams p = default_params(1);
    // At xi = 0: Jhat*(0) = m, so ghat*(0) = q* m / (kappa+ - m) = m / kappa-.
    const std::array<double, 1> zero{0.0};
    CHECK(stationary_g_hat(p, zero) == doctest::Approx(0.5).epsilon(1e-14));
    // Large |xi|: Jhat* -> 0, hence ghat* -> 0.
    const std::array<double, 1> far{5.0};
    CHECK(std::abs(stationary_g_hat(p, far)) < 1e-100);
    // |xi| = 0.25 against an extended-precision evaluation of the formula.
    const std::array<double, 1> q{0.25};
    CHECK(stationary_g_hat(p, q) ==
          doctest::Approx(0.0852104217296532484).epsilon(1e-13));
}

TEST_CASE("stationary_g_hat: signals a non-positive spectral gap") {
    // A near-delta dispersal kernel paired with a competition kernel whose
    // transform has a deep negative side lobe drives kappa+ - Jhat* below
    // zero at moderate frequencies.
    auto bump = [](double r) {
        return (r < 1.0) ? std::exp(-1.0 / (1.0 - r * r)) : 0.0;
    };
    const ModelParams p(make_gaussian_kernel(1, 0.01, 1.0),
                        make_radial_numeric_kernel(1, bump, 1.0), 0.5);
    const double q_star = p.q_star();
    double min_denom = 1e300;
    double argmin = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const double r = 0.3 + i * (3.0 - 0.3) / 400.0;
        const double denom = p.a_plus.gap_radial(r) + q_star * p.a_minus.fourier_radial(r);
        if (denom < min_denom) {
            min_denom = denom;
            argmin = r;
        }
    }
    REQUIRE(min_denom < 0.0);
    const std::array<double, 1> xi{argmin};
    CHECK_THROWS_AS(stationary_g_hat(p, xi), AssumptionViolationError);
}

TEST_CASE("evolve: t_end equal to the state time is the identity") {
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    const SpectralState s0 = make_initial_state(grid);
    for (EvolveBackend b : {EvolveBackend::duhamel, EvolveBackend::rk4}) {
        const SpectralState s1 = evolve(grid, traj, s0, 0.0, b);
        CHECK(s1.t == s0.t);
        CHECK(s1.p == s0.p);
        CHECK(s1.g_hat == s0.g_hat);
    }
}

TEST_CASE("evolve: duhamel and rk4 agree along the default trajectory") {
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    SpectralState sd = make_initial_state(grid);
    SpectralState sr = make_initial_state(grid);
    for (double t : {2.5, 5.0, 10.0}) {
        sd = evolve(grid, traj, sd, t, EvolveBackend::duhamel);
        sr = evolve(grid, traj, sr, t, EvolveBackend::rk4);
        double sup = std::abs(sd.p - sr.p);
        for (size_t i = 0; i < grid.size(); ++i) {
            sup = std::max(sup, std::abs(sd.g_hat[i] - sr.g_hat[i]));
        }
        CHECK(sup <= 1e-6);
    }
}

TEST_CASE("evolve: reaches the stationary pair by t = 40") {
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    const SpectralState s =
        evolve(grid, traj, make_initial_state(grid), 40.0, EvolveBackend::duhamel);
    CHECK(sup_diff_to_stationary(grid, p, s) <= 1e-6);
    CHECK(std::abs(s.p - stationary_p(grid, p)) <= 1e-5);
}

TEST_CASE("evolve: deterministic across thread counts") {
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    const SpectralState s0 = make_initial_state(grid);
    const SpectralState a = evolve(grid, traj, s0, 6.0, EvolveBackend::duhamel, 1);
    const SpectralState b = evolve(grid, traj, s0, 6.0, EvolveBackend::duhamel, 3);
    CHECK(a.p == b.p);
    CHECK(a.g_hat == b.g_hat);
    const SpectralState c = evolve(grid, traj, s0, 3.0, EvolveBackend::rk4, 1);
    const SpectralState d = evolve(grid, traj, s0, 3.0, EvolveBackend::rk4, 2);
    CHECK(c.p == d.p);
    CHECK(c.g_hat == d.g_hat);
}

TEST_CASE("convergence rate is the forcing-limited homogeneous rate") {
    // The homogeneous part of the ghat equation decays like e^{-2(kappa+-m)t},
    // but the forcing approaches its limit only like e^{-(kappa+-m)t} (through
    // q_t), so the measured sup-norm decay slope over t in [10, 30] sits at
    // -(kappa+ - m), not at twice that.
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    SpectralState s = make_initial_state(grid);
    std::vector<double> ts;
    std::vector<double> logs;
    for (double t = 10.0; t <= 30.0 + 1e-9; t += 2.5) {
        s = evolve(grid, traj, s, t, EvolveBackend::duhamel);
        ts.push_back(t);
        logs.push_back(std::log(sup_diff_to_stationary(grid, p, s)));
    }
    double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
    const double n = static_cast<double>(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sl += logs[i];
        stt += ts[i] * ts[i];
        stl += ts[i] * logs[i];
    }
    const double slope = (n * stl - st * sl) / (n * stt - st * st);
    const double gamma = traj.growth_rate();
    CHECK(slope < -gamma * 0.85);
    CHECK(slope > -gamma * 1.15);
}

TEST_CASE("ghat_t overshoots its stationary value before settling") {
    // With ghat_0 = 0 the forced linear equation overshoots: at xi ~ 0 the
    // trajectory peaks near 0.7 around t = 4 before relaxing to ghat*(0) = 0.5.
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    SpectralState s = make_initial_state(grid);
    double peak = 0.0;
    for (double t = 1.0; t <= 8.0 + 1e-9; t += 1.0) {
        s = evolve(grid, traj, s, t, EvolveBackend::duhamel);
        peak = std::max(peak, s.g_hat.front()); // node nearest xi = 0
    }
    const std::array<double, 1> zero{0.0};
    const double star = stationary_g_hat(p, zero);
    CHECK(peak > star + 0.1);
    // ...and has settled back within the bound by t = 40.
    s = evolve(grid, traj, s, 40.0, EvolveBackend::duhamel);
    CHECK(std::abs(s.g_hat.front() - star) < 1e-6);
}

TEST_CASE("stationary bound: |ghat*| <= m/kappa- on the grid") {
    for (int dim : {1, 2, 3}) {
        const ModelParams p = default_params(dim);
        const StationaryPair sp = make_stationary_pair(p);
        const double bound = p.mortality / p.kappa_minus();
        for (double v : sp.g_hat_star) {
            CHECK(std::abs(v) <= bound + 1e-12);
        }
    }
}

TEST_CASE("stationary_p: sign, pinned d=1 value, and near-critical growth") {
    const double p1 = stationary_p(default_params(1));
    CHECK(p1 < 0.0);
    CHECK(p1 == doctest::Approx(-0.244253785965066578).epsilon(1e-8));

    // m -> kappa+ makes the near-origin core of the integrand diverge in d=1.
    const double p_near = stationary_p(default_params(1, 0.99));
    CHECK(std::abs(p_near) >= 10.0 * std::abs(p1));
}

TEST_CASE("stationary_p d=3: radial rule against the non-radial rule") {
    const ModelParams p = default_params(3);
    const SpectralGrid grid = make_spectral_grid(p);
    const double radial_value = stationary_p(grid, p);
    const double q_star = p.q_star();
    const double cross = integrate_nonradial(
        [&p, q_star](std::span<const double> xi) {
            const double jh = p.j_star_hat(xi);
            const double denom = p.a_plus.fourier_gap(xi) +
                                 q_star * p.a_minus.fourier(xi);
            return jh / denom * p.a_minus.fourier(xi);
        },
        3, grid.r_max);
    CHECK(radial_value ==
          doctest::Approx(-cross / p.kappa_minus()).epsilon(1e-6));
    CHECK(radial_value < 0.0);
}

TEST_CASE("parseval pairing: grid weights reproduce real-space inner products") {
    const ModelParams p = default_params(1);
    const SpectralGrid grid = make_spectral_grid(p);
    // f, g Gaussian densities with sigma_f = 1, sigma_g = 0.8:
    // integral f g dx = (2 pi (sf^2 + sg^2))^{-1/2} and fhat ghat =
    // exp(-2 pi^2 (sf^2 + sg^2) xi^2).
    const double s2 = 1.0 * 1.0 + 0.8 * 0.8;
    double pairing = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        pairing += grid.weights[i] *
                   std::exp(-2.0 * M_PI * M_PI * s2 * grid.points[i] * grid.points[i]);
    }
    CHECK(pairing == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI * s2)).epsilon(1e-8));
}

TEST_CASE("evolve_to_stationary: residual-based stopping") {
    const ModelParams p = default_params(1);
    const MeanFieldTrajectory traj(p);
    const SpectralGrid grid = make_spectral_grid(p);
    const SpectralState s = evolve_to_stationary(grid, traj, make_initial_state(grid),
                                                 EvolveBackend::duhamel);
    CHECK(s.t <= 200.0 / traj.growth_rate());
    CHECK(stationarity_residual(grid, traj, s) < 1e-8);
    CHECK(sup_diff_to_stationary(grid, p, s) <= 1e-6);
}

TEST_CASE("inverse transform: definition at x = 0 and Gaussian recovery") {
    const ModelParams p = default_params(1);
    const StationaryPair sp = make_stationary_pair(p);

    const std::array<double, 1> zero{0.0};
    const double at0 = inverse_transform_g(sp, zero)[0];
    const double oracle = 2.0 * adaptive_simpson(
                                    [&p](double r) {
                                        const std::array<double, 1> xi{r};
                                        return stationary_g_hat(p, xi);
                                    },
                                    0.0, sp.grid.r_max, 1e-13);
    CHECK(at0 == doctest::Approx(oracle).epsilon(1e-8));

    // Substituting a Gaussian transform recovers the Gaussian density.
    std::vector<double> ghat(sp.grid.size());
    for (size_t i = 0; i < sp.grid.size(); ++i) {
        ghat[i] = std::exp(-2.0 * M_PI * M_PI * sp.grid.points[i] * sp.grid.points[i]);
    }
    const std::array<double, 4> xs{0.0, 0.5, 1.0, 2.0};
    const std::vector<double> vals = inverse_transform_g(sp.grid, ghat, xs);
    for (size_t k = 0; k < xs.size(); ++k) {
        const double expected =
            std::exp(-0.5 * xs[k] * xs[k]) / std::sqrt(2.0 * M_PI);
        CHECK(vals[k] == doctest::Approx(expected).epsilon(1e-6));
    }

    // Model covariance decays in real space -- but slower than a single
    // Gaussian: ghat* = sum_k (m/kappa+)^k ahat^k makes g* a geometric
    // mixture of k-fold self-convolutions, so at |x| = 5 sigma the ratio is
    // ~7e-3 and falls below 1e-3 only around |x| = 8.
    const std::array<double, 3> far{0.0, 5.0, 8.0};
    const std::vector<double> decay = inverse_transform_g(sp, far);
    CHECK(std::abs(decay[1]) <= 1e-2 * std::abs(decay[0]));
    CHECK(std::abs(decay[2]) <= 1e-3 * std::abs(decay[0]));

    // Beyond the announced resolution limit the request is rejected.
    const std::array<double, 1> too_far{20.0};
    CHECK_THROWS_AS(inverse_transform_g(sp, too_far), ResolutionError);
}

} // TEST_SUITE
