/**
 * @file special_math.hpp
 * @brief Lambert W, Gauss-Legendre rules, and R^d quadratures with geometric
 *        near-origin refinement for integrands with 1/(|xi|^2 + s) cores.
 *
 * The radial rule covers [0, r_max] with annuli shrinking geometrically
 * (ratio 1/2) towards the origin and a fixed-order Gauss-Legendre panel per
 * annulus, so integrands that vary on a scale sqrt(s) near zero are resolved
 * uniformly down to r_min.  Weights include the (d-1)-sphere surface factor
 * and r^{d-1}, so summing weight*f(r) approximates the full R^d integral of a
 * radial function.  A cube-shell tensor rule provides the non-radial fallback
 * for d <= 3.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace slm {

// ---------------------------------------------------------------------------
// Lambert W (principal branch on [0, inf))
// ---------------------------------------------------------------------------

/// Principal-branch Lambert W for x >= 0: returns w >= 0 with w*e^w = x.
/// Halley iteration from w0 = log1p(x) (x < e) or log x - log log x (x >= e);
/// iterates until |w*e^w - x| <= 1e-13 * max(1, x).
inline double lambert_w(double x) {
    if (!(x >= 0.0)) {
        throw InvalidParameterError("lambert_w: argument must be nonnegative, got " +
                                    std::to_string(x));
    }
    if (x == 0.0) {
        return 0.0;
    }
    const double e = std::exp(1.0);
    double w = (x < e) ? std::log1p(x) : std::log(x) - std::log(std::log(x));
    const double tol = 1e-13 * std::max(1.0, x);
    for (int iter = 0; iter < 64; ++iter) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        if (std::abs(f) <= tol) {
            break;
        }
        // Halley step: f' = e^w (w+1), f'' = e^w (w+2).
        const double denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * (w + 1.0));
        w -= f / denom;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes and weights on [-1, 1]
// ---------------------------------------------------------------------------

struct GaussLegendre {
    std::vector<double> x; ///< nodes, ascending in (-1, 1)
    std::vector<double> w; ///< positive weights summing to 2
};

/// Compute the n-point Gauss-Legendre rule by Newton iteration on P_n.
inline GaussLegendre gauss_legendre(int n) {
    if (n < 1) {
        throw InvalidParameterError("gauss_legendre: order must be >= 1");
    }
    GaussLegendre rule;
    rule.x.resize(n);
    rule.w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess for the i-th root of P_n.
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Evaluate P_n(z) and P'_n(z) by the three-term recurrence.
            double p0 = 1.0;
            double p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) {
                break;
            }
        }
        rule.x[i] = -z;
        rule.x[n - 1 - i] = z;
        rule.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        rule.w[n - 1 - i] = rule.w[i];
    }
    return rule;
}

// ---------------------------------------------------------------------------
// 1-D adaptive Simpson quadrature (module-internal oracle)
// ---------------------------------------------------------------------------

namespace detail {

inline double adaptive_simpson_rec(const std::function<double(double)> &f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

/// Adaptive Simpson rule with Richardson correction; absolute tolerance tol.
inline double adaptive_simpson(const std::function<double(double)> &f, double a, double b,
                               double tol = 1e-10, int max_depth = 48) {
    if (a == b) {
        return 0.0;
    }
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------
// Sphere geometry
// ---------------------------------------------------------------------------

/// Surface measure |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2).
inline double sphere_surface(int dim) {
    if (dim < 1) {
        throw InvalidParameterError("sphere_surface: dim must be >= 1");
    }
    return 2.0 * std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim);
}

/// Volume of the d-ball of radius r.
inline double ball_volume(int dim, double r) {
    return sphere_surface(dim) / dim * std::pow(r, dim);
}

// ---------------------------------------------------------------------------
// Regularized upper incomplete gamma Q(a, x) (used for Gaussian tail bounds)
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_q_series(double a, double x) {
    // P(a,x) by series, then Q = 1 - P.
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < 512; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) {
            break;
        }
    }
    const double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    return 1.0 - p;
}

inline double gamma_q_cf(double a, double x) {
    // Lentz continued fraction for Q(a,x).
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 512; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = b + an / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) {
            break;
        }
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace detail

/// Regularized upper incomplete gamma function Q(a, x) = Gamma(a,x)/Gamma(a).
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) {
        throw InvalidParameterError("gamma_q: need a > 0 and x >= 0");
    }
    if (x == 0.0) {
        return 1.0;
    }
    return (x < a + 1.0) ? detail::gamma_q_series(a, x) : detail::gamma_q_cf(a, x);
}

// ---------------------------------------------------------------------------
// Radial quadrature with geometric near-origin refinement
// ---------------------------------------------------------------------------

struct RadialQuadrature {
    int dim = 1;
    double r_min = 0.0; ///< smallest resolved radius (refinement floor)
    double r_max = 0.0; ///< truncation radius
    int order = 0;      ///< Gauss-Legendre order per annulus
    std::vector<double> nodes;   ///< radii, strictly increasing
    std::vector<double> weights; ///< include |S^{d-1}| r^{d-1} and panel scale
};

/// Build the rule: annuli [r_max/2^{j+1}, r_max/2^j] down to the first
/// boundary <= r_min, plus the innermost panel [0, boundary]; `order`-point
/// Gauss-Legendre on each.
inline RadialQuadrature make_radial_quadrature(int dim, double r_max, double r_min = 1e-9,
                                               int order = 16) {
    if (dim < 1 || r_max <= 0.0 || r_min <= 0.0 || r_min >= r_max || order < 2) {
        throw InvalidParameterError("make_radial_quadrature: invalid parameters");
    }
    RadialQuadrature q;
    q.dim = dim;
    q.r_min = r_min;
    q.r_max = r_max;
    q.order = order;

    std::vector<double> bounds; // descending panel boundaries, ending > r_min/2
    for (double b = r_max; b > r_min; b *= 0.5) {
        bounds.push_back(b);
    }
    // Panels, innermost first: [0, b_last], then [b_{j+1}, b_j] ascending.
    const GaussLegendre gl = gauss_legendre(order);
    const double surf = sphere_surface(dim);
    auto add_panel = [&](double lo, double hi) {
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        for (int k = 0; k < order; ++k) {
            const double r = mid + half * gl.x[k];
            q.nodes.push_back(r);
            q.weights.push_back(gl.w[k] * half * surf * std::pow(r, dim - 1));
        }
    };
    add_panel(0.0, bounds.back());
    for (size_t j = bounds.size(); j-- > 1;) {
        add_panel(bounds[j], bounds[j - 1]);
    }
    return q;
}

/// Integrate a radial function over {|xi| <= r_max} in R^d:
/// sum_k w_k f(r_k) with the surface/Jacobian factors folded into w_k.
inline double integrate_radial(const std::function<double(double)> &f,
                               const RadialQuadrature &q) {
    double acc = 0.0;
    for (size_t k = 0; k < q.nodes.size(); ++k) {
        const double v = f(q.nodes[k]);
        if (!std::isfinite(v)) {
            throw IntegrandFailureError(
                "integrate_radial: non-finite integrand at r = " + std::to_string(q.nodes[k]),
                q.nodes[k]);
        }
        acc += q.weights[k] * v;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Cube-shell tensor rule (non-radial fallback, d <= 3)
// ---------------------------------------------------------------------------

struct CubeShellGrid {
    int dim = 1;
    std::vector<std::array<double, 3>> points; ///< unused coordinates are 0
    std::vector<double> weights;
};

/// Tensor Gauss-Legendre points over [-r_max, r_max]^d decomposed into nested
/// cube shells with half-widths shrinking geometrically (ratio 1/2) down to
/// inner_floor, mirroring the radial rule's near-origin refinement.
/// `level` is the Gauss-Legendre order per axis per box.
inline CubeShellGrid make_cube_shell_grid(int dim, double r_max, int level = 8,
                                          double inner_floor = 1e-9) {
    if (dim < 1 || dim > 3 || r_max <= 0.0 || level < 2 || inner_floor <= 0.0 ||
        inner_floor >= r_max) {
        throw InvalidParameterError("make_cube_shell_grid: invalid parameters");
    }
    CubeShellGrid grid;
    grid.dim = dim;
    const GaussLegendre gl = gauss_legendre(level);

    // Tensor rule over the box prod_i [lo[i], hi[i]].
    auto add_box = [&](const std::array<double, 3> &lo, const std::array<double, 3> &hi) {
        std::array<int, 3> idx{0, 0, 0};
        while (true) {
            std::array<double, 3> pt{0.0, 0.0, 0.0};
            double w = 1.0;
            for (int d = 0; d < dim; ++d) {
                const double mid = 0.5 * (lo[d] + hi[d]);
                const double half = 0.5 * (hi[d] - lo[d]);
                pt[d] = mid + half * gl.x[idx[d]];
                w *= gl.w[idx[d]] * half;
            }
            grid.points.push_back(pt);
            grid.weights.push_back(w);
            int d = 0;
            for (; d < dim; ++d) {
                if (++idx[d] < level) {
                    break;
                }
                idx[d] = 0;
            }
            if (d == dim) {
                break;
            }
        }
    };

    // Shell between half-widths lo_h < hi_h: all 3^d segment combinations
    // except the all-inner one.
    auto add_shell = [&](double lo_h, double hi_h) {
        std::array<int, 3> seg{0, 0, 0};
        while (true) {
            bool all_inner = true;
            for (int d = 0; d < dim; ++d) {
                if (seg[d] != 1) {
                    all_inner = false;
                }
            }
            if (!all_inner) {
                std::array<double, 3> lo{0.0, 0.0, 0.0};
                std::array<double, 3> hi{0.0, 0.0, 0.0};
                for (int d = 0; d < dim; ++d) {
                    switch (seg[d]) {
                    case 0:
                        lo[d] = -hi_h;
                        hi[d] = -lo_h;
                        break;
                    case 1:
                        lo[d] = -lo_h;
                        hi[d] = lo_h;
                        break;
                    default:
                        lo[d] = lo_h;
                        hi[d] = hi_h;
                        break;
                    }
                }
                add_box(lo, hi);
            }
            int d = 0;
            for (; d < dim; ++d) {
                if (++seg[d] < 3) {
                    break;
                }
                seg[d] = 0;
            }
            if (d == dim) {
                break;
            }
        }
    };

    double hi = r_max;
    while (hi > inner_floor) {
        const double lo = 0.5 * hi;
        add_shell(lo, hi);
        hi = lo;
    }
    // Innermost full cube [-hi, hi]^d.
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hb{0.0, 0.0, 0.0};
    for (int d = 0; d < dim; ++d) {
        lo[d] = -hi;
        hb[d] = hi;
    }
    add_box(lo, hb);
    return grid;
}

/// Integrate an even function over [-r_max, r_max]^d with the cube-shell rule.
inline double integrate_nonradial(const std::function<double(std::span<const double>)> &f,
                                  int dim, double r_max, int level = 8,
                                  double inner_floor = 1e-9) {
    const CubeShellGrid grid = make_cube_shell_grid(dim, r_max, level, inner_floor);
    double acc = 0.0;
    for (size_t k = 0; k < grid.points.size(); ++k) {
        const double v = f(std::span<const double>(grid.points[k].data(), dim));
        if (!std::isfinite(v)) {
            double norm = 0.0;
            for (int d = 0; d < dim; ++d) {
                norm += grid.points[k][d] * grid.points[k][d];
            }
            norm = std::sqrt(norm);
            throw IntegrandFailureError(
                "integrate_nonradial: non-finite integrand at |xi| = " + std::to_string(norm),
                norm);
        }
        acc += grid.weights[k] * v;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues for d <= 3 (second-moment matrices)
// ---------------------------------------------------------------------------

/// Eigenvalues (ascending) of a symmetric dim x dim matrix stored row-major.
/// Closed forms for d = 1, 2; cyclic Jacobi for d = 3.
inline std::array<double, 3> sym_eigenvalues(const std::vector<double> &a, int dim) {
    std::array<double, 3> ev{0.0, 0.0, 0.0};
    if (dim == 1) {
        ev[0] = a[0];
        return ev;
    }
    if (dim == 2) {
        const double tr = a[0] + a[3];
        const double det = a[0] * a[3] - a[1] * a[2];
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        ev[0] = 0.5 * tr - disc;
        ev[1] = 0.5 * tr + disc;
        return ev;
    }
    if (dim != 3) {
        throw InvalidParameterError("sym_eigenvalues: dim must be 1, 2, or 3");
    }
    std::array<std::array<double, 3>, 3> m;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            m[i][j] = a[3 * i + j];
        }
    }
    // Cyclic Jacobi rotations.
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < 3; ++i) {
            for (int j = i + 1; j < 3; ++j) {
                off += m[i][j] * m[i][j];
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (int p = 0; p < 3; ++p) {
            for (int r = p + 1; r < 3; ++r) {
                if (std::abs(m[p][r]) < 1e-300) {
                    continue;
                }
                const double theta = 0.5 * (m[r][r] - m[p][p]) / m[p][r];
                const double t = ((theta >= 0.0) ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double mkp = m[k][p];
                    const double mkr = m[k][r];
                    m[k][p] = c * mkp - s * mkr;
                    m[k][r] = s * mkp + c * mkr;
                }
                for (int k = 0; k < 3; ++k) {
                    const double mpk = m[p][k];
                    const double mrk = m[r][k];
                    m[p][k] = c * mpk - s * mrk;
                    m[r][k] = s * mpk + c * mrk;
                }
            }
        }
    }
    ev = {m[0][0], m[1][1], m[2][2]};
    std::sort(ev.begin(), ev.end());
    return ev;
}

// ---------------------------------------------------------------------------
// Low-discrepancy sampling (validators) and stable trigonometric differences
// ---------------------------------------------------------------------------

/// i-th point of the additive-recurrence (Kronecker) low-discrepancy sequence
/// in [0,1)^dim, based on powers of the generalized golden ratio.
inline void kronecker_point(uint64_t i, int dim, std::span<double> out) {
    // phi_d is the unique real root > 1 of x^{d+1} = x + 1.
    double phi = 1.5;
    for (int it = 0; it < 64; ++it) {
        phi = std::pow(1.0 + phi, 1.0 / (dim + 1));
    }
    double alpha = 1.0;
    for (int d = 0; d < dim; ++d) {
        alpha /= phi;
        const double v = 0.5 + alpha * static_cast<double>(i + 1);
        out[d] = v - std::floor(v);
    }
}

/// 1 - cos(z) without cancellation.
inline double one_minus_cos(double z) {
    const double s = std::sin(0.5 * z);
    return 2.0 * s * s;
}

/// 1 - sin(z)/z without cancellation (series for small z).
inline double one_minus_sinc(double z) {
    const double az = std::abs(z);
    if (az < 1e-3) {
        const double z2 = z * z;
        return z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0));
    }
    return 1.0 - std::sin(z) / z;
}

/// 1 - J0(z) without cancellation (series for small z).
inline double one_minus_j0(double z) {
    const double az = std::abs(z);
    if (az < 1e-3) {
        const double q = 0.25 * z * z;
        return q * (1.0 - q / 4.0 * (1.0 - q / 9.0));
    }
    return 1.0 - std::cyl_bessel_j(0.0, az);
}

} // namespace slm
