/**
 * @file test_critical.cpp
 * @brief Critical mortality curve: frozen-correction integral p*(q), the
 *        extinction-equation solver, and dimension-dependent asymptotics.
 *
 * Oracle values for same-sigma Gaussian kernels with unit rates come from the
 * exact series identity Jhat_q = (1-q) ahat, which integrates term by term to
 *   p*(q) = -(2 pi)^{-d/2} (Li_{d/2}(1-q) - (1-q)) / (1-q),
 * evaluated at 40 digits and frozen below; no quadrature enters the oracle.
 */

#include <doctest.h>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "slm/critical.hpp"

namespace {

using namespace slm;

/// Default instance: Gaussian kernels, kappa+- = 1, sigma = 1, m = 0.5.
ModelParams default_params(int dim, double m = 0.5) {
    return ModelParams(make_gaussian_kernel(dim, 1.0, 1.0),
                       make_gaussian_kernel(dim, 1.0, 1.0), m);
}

// Roots of q + eps^d p*(q) = 0 relative to the leading-order prediction,
// from the polylog closed form (mpmath findroot, dps = 40).
constexpr std::array<double, 4> kEpsD3 = {0.2, 0.1, 0.05, 0.025};
constexpr std::array<double, 4> kRatioD3 = {0.94085916430419752, 0.97824827556941319,
                                            0.99219781219476312, 0.99722722740523955};
constexpr std::array<double, 3> kEpsD2 = {1e-2, 1e-3, 1e-4};
constexpr std::array<double, 3> kRatioD2 = {1.10252103633317454, 1.06784142765701646,
                                            1.05033917621140903};
constexpr std::array<double, 3> kEpsD1 = {1e-2, 1e-3, 1e-4};
constexpr std::array<double, 3> kRatioD1 = {0.84390539131623758, 0.92268160581579803,
                                            0.96289609270838741};

// (2 pi)^{-3/2} (zeta(3/2) - 1): the d = 3 correction integral at q = 0.
constexpr double kIntegralD3 = 0.10237557337878123608;

} // namespace

TEST_SUITE("critical") {

TEST_CASE("frozen correction integral: pinned values against the polylog closed form") {
    const ModelParams p3 = default_params(3);
    CHECK(p_star_of_q(p3, 0.1) ==
          doctest::Approx(-0.050402555366873317).epsilon(1e-12));
    const ModelParams p2 = default_params(2);
    CHECK(p_star_of_q(p2, 1e-2) ==
          doctest::Approx(-0.58118404567520339).epsilon(1e-12));
    CHECK(p_star_of_q(p2, 1e-4) ==
          doctest::Approx(-1.3068628564469140).epsilon(1e-12));
}

TEST_CASE("frozen correction integral: input contract") {
    const ModelParams p = default_params(2);
    CHECK_THROWS_AS(p_star_of_q(p, -0.1), InvalidParameterError);
    // The near-origin-refined radial quadrature has no non-radial counterpart.
    Kernel skew = make_numeric_kernel(
        2,
        [](std::span<const double> x) {
            return std::exp(-0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1])) /
                   (2.0 * M_PI * 0.5);
        },
        9.0);
    ModelParams skew_params(std::move(skew), make_gaussian_kernel(2, 1.0, 1.0), 0.5);
    CHECK_THROWS_AS(p_star_of_q(skew_params, 0.1), InvalidParameterError);
}

TEST_CASE("d >= 3: correction stays finite at q = 0 and matches -lambda3") {
    const ModelParams p = default_params(3);
    const double p0 = p_star_of_q(p, 0.0);
    CHECK(std::isfinite(p0));
    CHECK(p0 < 0.0);
    const AsymptoticConstants c = asymptotic_constants(p);
    REQUIRE(c.I.has_value());
    CHECK(*c.I > 0.0);
    CHECK(*c.I == doctest::Approx(kIntegralD3).epsilon(1e-12));
    // p*(0) = -I/kappa-: same integral, so the identity is near-exact.
    CHECK(p0 == doctest::Approx(-*c.lambda3).epsilon(1e-13));
}

TEST_CASE("d = 2: correction diverges logarithmically as q -> 0") {
    const ModelParams p = default_params(2);
    const double p2 = std::abs(p_star_of_q(p, 1e-2));
    const double p3 = std::abs(p_star_of_q(p, 1e-3));
    const double p4 = std::abs(p_star_of_q(p, 1e-4));
    CHECK(p2 < p3);
    CHECK(p3 < p4);
    // log-law: halving log10(q) twice scales |p*| by ~ln(1e4)/ln(1e2) = 2,
    // up to the offset term; measured ratio 2.2486.
    CHECK(p4 >= 1.84 * p2);
}

TEST_CASE("correction integral vs adaptive-Simpson oracle, unequal kernels") {
    // Distinct kernels break the series shortcut, so cross-check the fixed
    // quadrature against an adaptive integrator on the radial reduction.
    const Kernel ap = make_gaussian_kernel(3, 0.9, 1.1);
    const Kernel am = make_gaussian_kernel(3, 0.6, 0.8);
    const ModelParams p(ap, am, 0.4);
    const AsymptoticConstants c = asymptotic_constants(p);
    REQUIRE(c.I.has_value());
    const double surface = sphere_surface(3);
    auto f = [&](double r) {
        return surface * r * r * (p.a_plus.fourier_radial(r) / p.a_plus.gap_radial(r)) *
               p.a_minus.fourier_radial(r);
    };
    // The integrand has a finite r -> 0 limit, 4 pi mass- / (2 pi^2 sigma+^2),
    // but evaluates as 0/0 at exactly zero; start just off the origin and
    // account for the missing sliver at that limiting value.
    const double b = 1e-9;
    const double limit0 = 2.0 * p.a_minus.mass / (M_PI * 0.9 * 0.9);
    const double oracle =
        adaptive_simpson(f, b, 4.0, 1e-13) + limit0 * b;
    CHECK(*c.I == doctest::Approx(oracle).epsilon(1e-7));
}

TEST_CASE("extinction solver: root quality and mapped mortality") {
    const ModelParams p = default_params(3);
    const CriticalPoint cp = solve_critical(p, 0.2);
    CHECK(std::abs(cp.residual) <= 1e-10 * std::max(1.0, cp.q_star_eps));
    CHECK(cp.q_star_eps > 0.0);
    CHECK(cp.q_star_eps < p.q_star());
    CHECK(cp.m_cr > 0.5);           // above the baseline mortality
    CHECK(cp.m_cr < p.kappa_plus());
    CHECK(cp.p_star_eps < 0.0);
    CHECK(cp.m_cr == p.kappa_plus() - p.kappa_minus() * cp.q_star_eps);
    CHECK(cp.eps == 0.2);
}

TEST_CASE("extinction solver: scaling domain is (0, 1]") {
    const ModelParams p = default_params(3);
    CHECK_THROWS_AS(solve_critical(p, 0.0), InvalidParameterError);
    CHECK_THROWS_AS(solve_critical(p, -0.1), InvalidParameterError);
    CHECK_THROWS_AS(solve_critical(p, 1.5), InvalidParameterError);
    const CriticalPoint cp = solve_critical(p, 1.0); // eps = 1 is admissible
    CHECK(cp.q_star_eps > 0.0);
}

TEST_CASE("extinction solver: no root when the correction overwhelms the bracket") {
    // Near-critical baseline (q* = 0.1) at full scaling: h < 0 across the
    // whole admissible bracket in low dimension, where p* is large.
    for (int dim : {1, 2}) {
        const ModelParams p = default_params(dim, 0.9);
        try {
            solve_critical(p, 1.0);
            FAIL("expected NoRootError for dim ", dim);
        } catch (const NoRootError &e) {
            CHECK(e.h_lo() < 0.0);
            CHECK(e.h_hi() < 0.0);
        }
    }
}

TEST_CASE("d = 3 sweep: ratios to lambda3 eps^3 rise monotonically toward 1") {
    const ModelParams p = default_params(3);
    const AsymptoticConstants c = asymptotic_constants(p);
    double prev = 0.0;
    for (size_t i = 0; i < kEpsD3.size(); ++i) {
        const CriticalPoint cp = solve_critical(p, kEpsD3[i]);
        const double ratio = cp.q_star_eps / asymptotic_prediction(c, kEpsD3[i]);
        CHECK(ratio == doctest::Approx(kRatioD3[i]).epsilon(1e-10));
        CHECK(ratio > prev);
        CHECK(ratio < 1.0);
        prev = ratio;
    }
    CHECK(prev > 0.99);
}

TEST_CASE("d = 2 sweep: Lambert-corrected prediction, ratio decreasing toward 1") {
    const ModelParams p = default_params(2);
    const std::vector<double> eps_list(kEpsD2.begin(), kEpsD2.end());
    const std::vector<AsymptoticsRow> rows = asymptotics_table(p, eps_list);
    REQUIRE(rows.size() == kEpsD2.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].error.empty());
        CHECK(rows[i].ratio == doctest::Approx(kRatioD2[i]).epsilon(1e-10));
        CHECK(rows[i].lambert ==
              doctest::Approx(lambert_w(1.0 / (kEpsD2[i] * kEpsD2[i]))).epsilon(1e-14));
        CHECK(rows[i].in_asymptotic_range);
        // Correction to leading order is O(1/W): approaches 1 from above.
        CHECK(rows[i].ratio > 1.0);
        if (i > 0) {
            CHECK(rows[i].ratio < rows[i - 1].ratio);
        }
    }
}

TEST_CASE("d = 1 sweep: two-thirds-power law") {
    const ModelParams p = default_params(1);
    const AsymptoticConstants c = asymptotic_constants(p);
    for (size_t i = 0; i < kEpsD1.size(); ++i) {
        const CriticalPoint cp = solve_critical(p, kEpsD1[i]);
        const double ratio = cp.q_star_eps / asymptotic_prediction(c, kEpsD1[i]);
        CHECK(ratio == doctest::Approx(kRatioD1[i]).epsilon(1e-10));
    }
    // By eps = 1e-3 the prediction is within 15 percent.
    const CriticalPoint cp = solve_critical(p, 1e-3);
    CHECK(std::abs(cp.q_star_eps / asymptotic_prediction(c, 1e-3) - 1.0) < 0.15);
}

TEST_CASE("vanishing-scaling limit: q -> 0, m_cr -> kappa+ monotonically") {
    const ModelParams p = default_params(3);
    const AsymptoticConstants c = asymptotic_constants(p);
    double prev_q = 1e300;
    double prev_m = 0.0;
    for (double eps : kEpsD3) {
        const CriticalPoint cp = solve_critical(p, eps);
        CHECK(cp.q_star_eps < prev_q);
        CHECK(cp.m_cr > prev_m);
        CHECK(cp.m_cr < p.kappa_plus());
        // The gap to kappa+ is kappa- q, within the leading-order envelope.
        CHECK(p.kappa_plus() - cp.m_cr <
              1.05 * p.kappa_minus() * asymptotic_prediction(c, eps));
        prev_q = cp.q_star_eps;
        prev_m = cp.m_cr;
    }
}

TEST_CASE("correction along the critical curve: d = 3 settles, d = 1 diverges") {
    // d >= 3: p*(q(eps)) -> p*(0) at the sqrt-law rate (q ~ eps^3 so each
    // halving of eps shrinks the gap by ~2^{3/2}).
    const ModelParams p3 = default_params(3);
    const double p0 = p_star_of_q(p3, 0.0);
    std::vector<double> gaps;
    for (double eps : kEpsD3) {
        gaps.push_back(std::abs(solve_critical(p3, eps).p_star_eps - p0));
    }
    CHECK(gaps.front() == doctest::Approx(6.05457696446e-3).epsilon(1e-6));
    CHECK(gaps.back() == doctest::Approx(2.83864184238e-4).epsilon(1e-6));
    for (size_t i = 1; i < gaps.size(); ++i) {
        CHECK(gaps[i] * 2.0 < gaps[i - 1]);
    }
    // d = 1: no limit; |p*(q(eps))| = q/eps grows without bound.
    const ModelParams p1 = default_params(1);
    double prev = 0.0;
    for (double eps : kEpsD1) {
        const double mag = std::abs(solve_critical(p1, eps).p_star_eps);
        CHECK(mag > prev);
        prev = mag;
    }
    CHECK(prev > 16.0);
}

TEST_CASE("asymptotic constants: closed forms and parameter dependence") {
    // lambda2 = kappa+ / (2 pi sqrt(det A+)); Gaussian A+ = mass sigma^2 I.
    const AsymptoticConstants c2 = asymptotic_constants(default_params(2));
    REQUIRE(c2.lambda2.has_value());
    CHECK(*c2.lambda2 == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-14));
    CHECK(!c2.lambda3.has_value());
    CHECK(!c2.lambda1.has_value());
    const ModelParams p2b(make_gaussian_kernel(2, 0.8, 1.3),
                          make_gaussian_kernel(2, 1.0, 1.0), 0.5);
    CHECK(*asymptotic_constants(p2b).lambda2 ==
          doctest::Approx(1.3 / (2.0 * M_PI * 1.3 * 0.64)).epsilon(1e-12));

    // lambda1 = (kappa+^2 / (2 kappa- integral x^2 a+))^{1/3}.
    const AsymptoticConstants c1 = asymptotic_constants(default_params(1));
    REQUIRE(c1.lambda1.has_value());
    CHECK(*c1.lambda1 == doctest::Approx(0.79370052598409974).epsilon(1e-14));
    const ModelParams p1b(make_gaussian_kernel(1, 0.7, 1.2),
                          make_gaussian_kernel(1, 1.0, 0.8), 0.4);
    CHECK(*asymptotic_constants(p1b).lambda1 ==
          doctest::Approx(std::cbrt(1.2 * 1.2 / (2.0 * 0.8 * 1.2 * 0.49)))
              .epsilon(1e-12));

    // lambda3 for d = 3 defaults equals I (kappa- = 1).
    const AsymptoticConstants c3 = asymptotic_constants(default_params(3));
    REQUIRE(c3.lambda3.has_value());
    CHECK(*c3.lambda3 == *c3.I);
}

TEST_CASE("asymptotic constants ignore mortality; lambda1 tracks competition rate") {
    // m cancels from J_q = a+ - q a-, so the constants must be bitwise
    // unchanged when only m moves.
    const AsymptoticConstants a3 = asymptotic_constants(default_params(3, 0.5));
    const AsymptoticConstants b3 = asymptotic_constants(default_params(3, 0.9));
    CHECK(*a3.I == *b3.I);
    CHECK(*a3.lambda3 == *b3.lambda3);
    const AsymptoticConstants a2 = asymptotic_constants(default_params(2, 0.5));
    const AsymptoticConstants b2 = asymptotic_constants(default_params(2, 0.9));
    CHECK(*a2.lambda2 == *b2.lambda2);
    // kappa- does enter lambda1 (and lambda3) as an explicit factor.
    const ModelParams weak(make_gaussian_kernel(1, 1.0, 1.0),
                           make_gaussian_kernel(1, 1.0, 0.8), 0.5);
    const AsymptoticConstants c1 = asymptotic_constants(default_params(1));
    const AsymptoticConstants w1 = asymptotic_constants(weak);
    CHECK(*w1.lambda1 != *c1.lambda1);
    CHECK(*w1.lambda1 ==
          doctest::Approx(*c1.lambda1 * std::cbrt(1.0 / 0.8)).epsilon(1e-13));
}

TEST_CASE("competition ceiling: mean-field bound and kernel-ratio bound") {
    // Same-shape kernels: the density ratio a+/a- is flat, so the mean-field
    // equilibrium is the binding constraint.
    CHECK(competition_ceiling(default_params(1)) ==
          doctest::Approx(0.5).epsilon(1e-12));
    // Narrower competition kernel: a+/a- dips to sigma-/sigma+ at the origin,
    // which binds once q* exceeds it.
    const ModelParams p(make_gaussian_kernel(1, 1.0, 1.0),
                        make_gaussian_kernel(1, 0.5, 1.0), 0.2);
    CHECK(p.q_star() == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(competition_ceiling(p) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("asymptotics table: per-row errors do not abort the sweep") {
    const ModelParams p = default_params(3);
    const std::vector<AsymptoticsRow> rows =
        asymptotics_table(p, {0.2, 1.5, 1.0});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].error.empty());
    CHECK(rows[0].in_asymptotic_range);
    CHECK(rows[0].q_star_eps > 0.0);
    CHECK(rows[0].lambert == 0.0); // only populated for d = 2
    // eps = 1.5 is outside the scaling domain: recorded, not thrown.
    CHECK(!rows[1].error.empty());
    CHECK(rows[1].q_star_eps == 0.0);
    // eps = 1 solves but sits outside the asymptotic regime.
    CHECK(rows[2].error.empty());
    CHECK(!rows[2].in_asymptotic_range);
    CHECK(rows[2].q_star_eps > 0.0);
}

} // TEST_SUITE
