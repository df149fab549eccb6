/**
 * @file critical.hpp
 * @brief Critical mortality curve m_cr(eps) from the extinction equation
 *        q + eps^d p*(q) = 0, plus the dimension-dependent asymptotic
 *        constants and ratio tables.
 *
 * At scaling eps the first-order density correction shifts the equilibrium:
 * the critical point is the q > 0 solving q + eps^d p*(q) = 0, where p*(q)
 * is the stationary correction with the competition response frozen at
 * density q (mortality drops out of J_q = a+ - q a-).  The solved q maps to
 * m_cr = kappa+ - kappa- q.  As eps -> 0:
 *   d >= 3: q(eps) ~ (I/kappa-) eps^d          (I a convergent integral),
 *   d  = 2: q(eps) ~ lambda2 eps^2 W(eps^-2)   (W the Lambert function),
 *   d  = 1: q(eps) ~ lambda1 eps^{2/3},
 * reflecting the divergence rate of p*(q) as q -> 0 in low dimension.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "special_math.hpp"

namespace slm {

/// Solution of the extinction equation at one scaling eps.
struct CriticalPoint {
    double eps = 0.0;
    double q_star_eps = 0.0;  ///< root q of q + eps^d p*(q) = 0
    double m_cr = 0.0;        ///< kappa+ - kappa- q
    double p_star_eps = 0.0;  ///< p*(q) at the root
    double residual = 0.0;    ///< q + eps^d p*(q) at the accepted root
};

/// Dimension-appropriate asymptotic constants (only relevant fields set).
struct AsymptoticConstants {
    int dim = 0;
    std::optional<double> I;        ///< d >= 3: integral ahat+/(kappa+ - ahat+) ahat-
    std::optional<double> lambda3;  ///< I / kappa-
    std::optional<double> lambda2;  ///< kappa+ / (2 pi sqrt(det A+))
    std::optional<double> lambda1;  ///< (kappa+^2 / (2 kappa- integral x^2 a+))^{1/3}
};

/// One row of the asymptotic-ratio table.
struct AsymptoticsRow {
    double eps = 0.0;
    double q_star_eps = 0.0;
    double m_cr = 0.0;
    double p_star_eps = 0.0;
    double predicted = 0.0;      ///< leading-order term at this eps
    double ratio = 0.0;          ///< q_star_eps / predicted
    double lambert = 0.0;        ///< W(eps^-2) (d = 2 only, else 0)
    bool in_asymptotic_range = false; ///< eps <= 0.25
    std::string error;           ///< non-empty if the row's solve failed
};

namespace detail {

/// Quadrature for the correction integral at competition response q:
/// near-origin refinement floor tied to the integrand core width
/// sqrt(kappa- q) so the Lorentzian peak stays resolved as q -> 0.
inline RadialQuadrature correction_rule(const ModelParams &p, double q) {
    const double core = std::sqrt(std::max(p.kappa_minus() * q, 0.0));
    const double r_min = std::clamp(0.01 * core, 1e-13, 1e-9);
    double r_max = 0.25;
    const double band = std::min(p.a_plus.resolved_band, p.a_minus.resolved_band);
    for (int i = 0; i < 400; ++i) {
        if (r_max >= band) {
            r_max = band;
            break;
        }
        const double tail =
            p.a_plus.tail_bound(r_max) + std::abs(q) * p.a_minus.tail_bound(r_max);
        if (tail <= 1e-9 * (p.kappa_plus() + std::abs(q) * p.kappa_minus())) {
            break;
        }
        r_max *= 1.25;
    }
    return make_radial_quadrature(p.dim(), r_max, r_min, 16);
}

} // namespace detail

/// Stationary correction with the competition response frozen at density q:
///   p*(q) = -(1/kappa-) integral Jhat_q/(kappa+ - Jhat_q) ahat- dxi,
/// Jhat_q = ahat+ - q ahat- (mortality cancels).  Throws a bracket-violation
/// error when kappa+ - Jhat_q fails to stay positive (the A3-type ceiling),
/// which the root solver uses to shrink its bracket.
inline double p_star_of_q(const ModelParams &p, double q) {
    if (!(q >= 0.0)) {
        throw InvalidParameterError("p_star_of_q: q must be nonnegative");
    }
    if (!p.a_plus.is_radial || !p.a_minus.is_radial) {
        throw InvalidParameterError(
            "p_star_of_q: the near-origin-refined quadrature requires radial kernels");
    }
    const RadialQuadrature rule = detail::correction_rule(p, q);
    double acc = 0.0;
    for (size_t i = 0; i < rule.nodes.size(); ++i) {
        const double r = rule.nodes[i];
        const double am = p.a_minus.fourier_radial(r);
        const double denom = p.a_plus.gap_radial(r) + q * am; // kappa+ - Jhat_q
        if (!(denom > 0.0)) {
            throw BracketViolationError(
                "p_star_of_q: kappa+ - Jhat_q(xi) <= 0 at |xi| = " +
                std::to_string(r) + " for q = " + std::to_string(q));
        }
        const double j_q = p.a_plus.fourier_radial(r) - q * am;
        acc += rule.weights[i] * (j_q / denom) * am;
    }
    const double value = -acc / p.kappa_minus();
    if (!std::isfinite(value)) {
        throw IntegrandFailureError("p_star_of_q: non-finite integral", q);
    }
    return value;
}

/// Largest admissible competition response: the ceiling q_ub up to which
/// J_q = a+ - q a- stays nonnegative on a low-discrepancy sample (and the
/// mean-field bound (kappa+ - m)/kappa-, whichever is smaller).
inline double competition_ceiling(const ModelParams &p) {
    const int dim = p.dim();
    const double r_eff =
        std::max(p.a_plus.effective_radius(), p.a_minus.effective_radius());
    // J_q >= 0 for all q <= min over sample of a+/a- (where a- > 0).
    double ceiling = p.q_star();
    std::vector<double> x(dim);
    auto probe = [&](std::span<const double> pt) {
        const double minus = p.a_minus.evaluate(pt);
        if (minus > 1e-300) {
            ceiling = std::min(ceiling, p.a_plus.evaluate(pt) / minus);
        }
    };
    for (int i = 0; i < 4096; ++i) {
        kronecker_point(static_cast<uint64_t>(i), dim, x);
        for (int d = 0; d < dim; ++d) {
            x[d] = (2.0 * x[d] - 1.0) * r_eff;
        }
        probe(x);
    }
    std::fill(x.begin(), x.end(), 0.0);
    probe(x);
    return ceiling;
}

/// Solve the extinction equation h(q) = q + eps^d p*(q) = 0 on (0, q_ub):
/// 60 bisection steps from [1e-14, q_ub], then secant polish.
inline CriticalPoint solve_critical(const ModelParams &p, double eps) {
    if (!(eps > 0.0) || !(eps <= 1.0)) {
        throw InvalidParameterError("solve_critical: eps must lie in (0, 1]");
    }
    const double eps_d = std::pow(eps, p.dim());
    auto h = [&](double q) { return q + eps_d * p_star_of_q(p, q); };

    double lo = 1e-14;
    double hi = 0.999 * competition_ceiling(p);
    if (!(hi > lo)) {
        throw BracketViolationError("solve_critical: empty bracket (ceiling " +
                                    std::to_string(hi) + ")");
    }
    double h_lo = h(lo);
    // The sampled ceiling is approximate for numeric kernels; back off if the
    // spectral positivity check rejects the upper end.
    double h_hi = 0.0;
    bool hi_ok = false;
    for (int i = 0; i < 8 && !hi_ok; ++i) {
        try {
            h_hi = h(hi);
            hi_ok = true;
        } catch (const BracketViolationError &) {
            hi *= 0.9;
        }
    }
    if (!hi_ok) {
        throw BracketViolationError(
            "solve_critical: no admissible upper bracket endpoint");
    }
    if (!(h_lo < 0.0) || !(h_hi > 0.0)) {
        throw NoRootError("solve_critical: no sign change on the bracket", h_lo, h_hi);
    }
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        double h_mid = 0.0;
        try {
            h_mid = h(mid);
        } catch (const BracketViolationError &) {
            hi = mid; // above the admissible ceiling: shrink from the top
            continue;
        }
        if (h_mid < 0.0) {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
            h_hi = h_mid;
        }
    }
    // Secant polish inside the final bracket.
    double q = (h_hi != h_lo) ? lo - h_lo * (hi - lo) / (h_hi - h_lo)
                              : 0.5 * (lo + hi);
    q = std::clamp(q, lo, hi);
    double best_q = q;
    double best_h = h(q);
    for (int i = 0; i < 4 && best_h != 0.0; ++i) {
        const double q2 = std::clamp(best_q - best_h * (hi - lo) / (h_hi - h_lo), lo, hi);
        if (q2 == best_q) {
            break;
        }
        const double h2 = h(q2);
        if (std::abs(h2) < std::abs(best_h)) {
            best_q = q2;
            best_h = h2;
        } else {
            break;
        }
    }

    CriticalPoint cp;
    cp.eps = eps;
    cp.q_star_eps = best_q;
    cp.m_cr = p.kappa_plus() - p.kappa_minus() * best_q;
    cp.p_star_eps = p_star_of_q(p, best_q);
    cp.residual = best_h;
    return cp;
}

/// Constants governing the eps -> 0 behavior of the critical curve.
inline AsymptoticConstants asymptotic_constants(const ModelParams &p) {
    AsymptoticConstants c;
    const int dim = p.dim();
    c.dim = dim;

    if (dim >= 3) {
        // I = integral ahat+/(kappa+ - ahat+) ahat- dxi, convergent since the
        // integrand core behaves like 1/|xi|^2 near zero.
        const RadialQuadrature rule = detail::correction_rule(p, 0.0);
        double acc = 0.0;
        for (size_t i = 0; i < rule.nodes.size(); ++i) {
            const double r = rule.nodes[i];
            const double gap = p.a_plus.gap_radial(r);
            if (!(gap > 0.0)) {
                throw IntegrandFailureError(
                    "asymptotic_constants: vanishing spectral gap", r);
            }
            acc += rule.weights[i] *
                   (p.a_plus.fourier_radial(r) / gap) * p.a_minus.fourier_radial(r);
        }
        c.I = acc;
        c.lambda3 = acc / p.kappa_minus();
    }
    if (dim == 2) {
        const auto &A = p.a_plus.second_moment_matrix;
        const double det = A[0] * A[3] - A[1] * A[2];
        if (!(det > 0.0)) {
            throw InvalidKernelError(
                "asymptotic_constants: second-moment matrix not positive definite");
        }
        c.lambda2 = p.kappa_plus() / (2.0 * M_PI * std::sqrt(det));
    }
    if (dim == 1) {
        const double second = p.a_plus.second_moment_matrix[0];
        if (!(second > 0.0)) {
            throw InvalidKernelError(
                "asymptotic_constants: vanishing second moment");
        }
        c.lambda1 = std::cbrt(p.kappa_plus() * p.kappa_plus() /
                              (2.0 * p.kappa_minus() * second));
    }
    return c;
}

/// Leading-order prediction for q(eps) in the kernel's dimension.
inline double asymptotic_prediction(const AsymptoticConstants &c, double eps) {
    if (c.dim >= 3) {
        return *c.lambda3 * std::pow(eps, c.dim);
    }
    if (c.dim == 2) {
        return *c.lambda2 * eps * eps * lambert_w(1.0 / (eps * eps));
    }
    return *c.lambda1 * std::cbrt(eps * eps);
}

/// Sweep solve_critical over eps_list and tabulate ratios against the
/// leading-order prediction.  Rows with failing solves carry the error text
/// instead of aborting the sweep.
inline std::vector<AsymptoticsRow> asymptotics_table(const ModelParams &p,
                                                     const std::vector<double> &eps_list) {
    const AsymptoticConstants c = asymptotic_constants(p);
    std::vector<AsymptoticsRow> rows;
    rows.reserve(eps_list.size());
    for (double eps : eps_list) {
        AsymptoticsRow row;
        row.eps = eps;
        row.in_asymptotic_range = eps <= 0.25;
        try {
            const CriticalPoint cp = solve_critical(p, eps);
            row.q_star_eps = cp.q_star_eps;
            row.m_cr = cp.m_cr;
            row.p_star_eps = cp.p_star_eps;
            row.predicted = asymptotic_prediction(c, eps);
            row.ratio = cp.q_star_eps / row.predicted;
            if (p.dim() == 2) {
                row.lambert = lambert_w(1.0 / (eps * eps));
            }
        } catch (const Error &e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace slm
