/**
 * @file kernels.hpp
 * @brief Dispersal/competition kernels, their Fourier transforms, moments,
 *        scaling, and model-assumption validators.
 *
 * Fourier convention: fhat(xi) = integral f(x) exp(-2 pi i x.xi) dx.  All
 * kernels are even, so transforms are real.  Every Kernel also carries
 * fourier_gap(xi) = mass - fourier(xi) computed without cancellation
 * (via expm1 or 2 sin^2 forms); several downstream integrands divide by this
 * quantity at radii where the naive subtraction underflows to zero.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "special_math.hpp"

namespace slm {

enum class FourierKind { analytic, numeric };

/// Maximum spatial dimension supported by the fixed-size point buffers.
inline constexpr int kMaxDim = 8;

using RealFunction = std::function<double(std::span<const double>)>;

/// A birth-dispersal or competition kernel together with its transform,
/// total mass, and second-moment matrix.
struct Kernel {
    int dim = 1;
    RealFunction evaluate;              ///< a(x), nonnegative, even
    RealFunction fourier;               ///< ahat(xi), real by evenness
    RealFunction fourier_gap;           ///< mass - ahat(xi), cancellation-free
    std::function<double(double)> tail_bound; ///< upper bound for tail integral of |ahat|
    double mass = 0.0;                  ///< kappa = integral of a
    std::vector<double> second_moment_matrix; ///< dim x dim, row-major
    bool is_radial = false;             ///< declared by constructor, not detected
    FourierKind fourier_kind = FourierKind::analytic;
    std::optional<double> gaussian_sigma; ///< set for the Gaussian family (exact samplers)
    double support_radius = std::numeric_limits<double>::infinity();
    /// Largest |xi| at which `fourier` is numerically trustworthy: finite for
    /// quadrature transforms (beyond it the node sum aliases), infinite for
    /// analytic ones.  Frequency grids must not extend past it.
    double resolved_band = std::numeric_limits<double>::infinity();

    /// Transform evaluated on the first axis; the radial profile when is_radial.
    double fourier_radial(double r) const {
        std::array<double, kMaxDim> buf{};
        buf[0] = r;
        return fourier(std::span<const double>(buf.data(), dim));
    }
    /// mass - fourier along the first axis (radial profile of the gap).
    double gap_radial(double r) const {
        std::array<double, kMaxDim> buf{};
        buf[0] = r;
        return fourier_gap(std::span<const double>(buf.data(), dim));
    }
    /// a evaluated on the first axis (radial profile when is_radial).
    double evaluate_radial(double r) const {
        std::array<double, kMaxDim> buf{};
        buf[0] = r;
        return evaluate(std::span<const double>(buf.data(), dim));
    }
    /// Radius within which essentially all kernel mass lives (probe range).
    double effective_radius() const {
        if (std::isfinite(support_radius)) {
            return support_radius;
        }
        if (gaussian_sigma) {
            return 6.0 * *gaussian_sigma;
        }
        return 10.0;
    }
};

namespace detail {

inline double sqnorm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return s;
}

/// Dyadic-shell estimate of R -> integral_{|xi|>R} |ahat| for kernels whose
/// transform is only known by quadrature.  Octave shells are measured with a
/// radial rule (along a handful of rays when the kernel is not radial) and a
/// geometric remainder is appended once the shells decay.  Heuristic: used
/// for truncation control, not as a certified bound.
inline std::function<double(double)>
numeric_tail_bound(int dim, bool radial, const std::shared_ptr<const Kernel> &self) {
    // Ray directions for non-radial kernels: axes plus diagonals.
    std::vector<std::array<double, 3>> rays;
    if (!radial) {
        for (int d = 0; d < dim; ++d) {
            std::array<double, 3> u{0.0, 0.0, 0.0};
            u[d] = 1.0;
            rays.push_back(u);
        }
        if (dim >= 2) {
            const double s = 1.0 / std::sqrt(static_cast<double>(dim));
            std::array<double, 3> u{s, s, dim == 3 ? s : 0.0};
            rays.push_back(u);
            u[1] = -s;
            rays.push_back(u);
        }
    }
    return [dim, radial, self, rays](double R) {
        auto abs_ft = [&](double r) {
            if (radial) {
                return std::abs(self->fourier_radial(r));
            }
            double worst = 0.0;
            std::array<double, 3> xi{};
            for (const auto &u : rays) {
                for (int d = 0; d < dim; ++d) {
                    xi[d] = r * u[d];
                }
                worst = std::max(worst, std::abs(self->fourier(
                                            std::span<const double>(xi.data(), dim))));
            }
            return worst;
        };
        auto shell = [&](double a, double b) {
            const GaussLegendre gl = gauss_legendre(12);
            const double mid = 0.5 * (a + b);
            const double half = 0.5 * (b - a);
            const double surf = sphere_surface(dim);
            double acc = 0.0;
            for (int k = 0; k < 12; ++k) {
                const double r = mid + half * gl.x[k];
                acc += half * gl.w[k] * surf * std::pow(r, dim - 1) * abs_ft(r);
            }
            return acc;
        };
        auto geometric_ratio = [](double t1, double t2) {
            double rho = (t1 > 0.0) ? t2 / t1 : 0.5;
            return std::min(std::max(rho, 1e-6), 0.9);
        };
        // Shells must stay inside the resolvable band: past it the quadrature
        // transform aliases and measures noise, not decay.
        const double edge = self->resolved_band;
        if (R >= 0.5 * edge) {
            // Extrapolate from the top two in-band octaves.
            const double t1 = shell(0.125 * edge, 0.25 * edge);
            const double t2 = shell(0.25 * edge, 0.5 * edge);
            const double rho = geometric_ratio(t1, t2);
            const double octaves = std::log2(std::max(R, 0.25 * edge) / (0.25 * edge));
            return t2 * std::pow(rho, octaves) / (1.0 - rho);
        }
        double total = 0.0;
        double prev = -1.0;
        double last = 0.0;
        double rho = 0.5;
        double lo = R;
        for (int k = 0; k < 12 && 2.0 * lo <= edge; ++k) {
            last = shell(lo, 2.0 * lo);
            total += last;
            if (last < 1e-300) {
                return total;
            }
            if (prev > 0.0) {
                rho = geometric_ratio(prev, last);
                if (last < 1e-3 * prev) {
                    break;
                }
            }
            prev = last;
            lo *= 2.0;
        }
        // Geometric remainder from the trailing decay ratio (capped).
        return total + last * rho / (1.0 - rho);
    };
}

/// Composite Gauss-Legendre grid over [-R, R]^dim with per-axis panels;
/// holds kernel samples so transforms are weighted sums over this grid.
struct TensorGrid {
    int dim;
    std::vector<double> axis_nodes;  ///< per-axis nodes (shared across axes)
    std::vector<double> axis_weights;
    std::vector<double> values;      ///< a(x) * prod(weights) per tensor point
    std::vector<double> coords;      ///< flattened tensor points, dim per entry
};

inline std::shared_ptr<const TensorGrid>
make_tensor_grid(int dim, const RealFunction &f, double R) {
    // Density sets the resolvable frequency band of the quadrature transform
    // (roughly a quarter of the node count per unit length); d = 1 gets a
    // wide band cheaply, higher dimensions trade band for tensor cost.
    int panels = 64;
    int order = 16;
    if (dim == 2) {
        panels = 14;
        order = 12;
    } else if (dim == 3) {
        panels = 8;
        order = 8;
    }
    auto grid = std::make_shared<TensorGrid>();
    grid->dim = dim;
    const GaussLegendre gl = gauss_legendre(order);
    for (int p = 0; p < panels; ++p) {
        const double lo = -R + 2.0 * R * p / panels;
        const double hi = -R + 2.0 * R * (p + 1) / panels;
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        for (int k = 0; k < order; ++k) {
            grid->axis_nodes.push_back(mid + half * gl.x[k]);
            grid->axis_weights.push_back(half * gl.w[k]);
        }
    }
    const size_t n = grid->axis_nodes.size();
    std::array<size_t, 3> idx{0, 0, 0};
    while (true) {
        std::array<double, 3> pt{0.0, 0.0, 0.0};
        double w = 1.0;
        for (int d = 0; d < dim; ++d) {
            pt[d] = grid->axis_nodes[idx[d]];
            w *= grid->axis_weights[idx[d]];
        }
        const double v = f(std::span<const double>(pt.data(), dim));
        grid->values.push_back(w * v);
        for (int d = 0; d < dim; ++d) {
            grid->coords.push_back(pt[d]);
        }
        int d = 0;
        for (; d < dim; ++d) {
            if (++idx[d] < n) {
                break;
            }
            idx[d] = 0;
        }
        if (d == dim) {
            break;
        }
    }
    return grid;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gaussian kernel family (analytic transform)
// ---------------------------------------------------------------------------

/// Gaussian kernel: a(x) = mass (2 pi sigma^2)^{-d/2} exp(-|x|^2 / 2 sigma^2),
/// ahat(xi) = mass exp(-2 pi^2 sigma^2 |xi|^2); second moments mass sigma^2 I.
inline Kernel make_gaussian_kernel(int dim, double sigma, double mass) {
    if (dim < 1 || dim > kMaxDim) {
        throw InvalidParameterError("make_gaussian_kernel: dim must be in [1, " +
                                    std::to_string(kMaxDim) + "]");
    }
    if (!(sigma > 0.0) || !(mass > 0.0)) {
        throw InvalidParameterError("make_gaussian_kernel: sigma and mass must be positive");
    }
    Kernel k;
    k.dim = dim;
    k.mass = mass;
    k.is_radial = true;
    k.fourier_kind = FourierKind::analytic;
    k.gaussian_sigma = sigma;
    const double norm = mass * std::pow(2.0 * M_PI * sigma * sigma, -0.5 * dim);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    k.evaluate = [norm, inv2s2](std::span<const double> x) {
        return norm * std::exp(-detail::sqnorm(x) * inv2s2);
    };
    const double alpha = 2.0 * M_PI * M_PI * sigma * sigma;
    k.fourier = [mass, alpha](std::span<const double> xi) {
        return mass * std::exp(-alpha * detail::sqnorm(xi));
    };
    k.fourier_gap = [mass, alpha](std::span<const double> xi) {
        return -mass * std::expm1(-alpha * detail::sqnorm(xi));
    };
    // Tail of |ahat| in closed form through the upper incomplete gamma.
    const double surf = sphere_surface(dim);
    const double pref = mass * surf * std::tgamma(0.5 * dim) /
                        (2.0 * std::pow(alpha, 0.5 * dim));
    k.tail_bound = [pref, alpha, dim](double R) {
        return pref * gamma_q(0.5 * dim, alpha * R * R);
    };
    k.second_moment_matrix.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        k.second_moment_matrix[static_cast<size_t>(i) * dim + i] = mass * sigma * sigma;
    }
    return k;
}

// ---------------------------------------------------------------------------
// Numeric kernels (transform by quadrature of the defining integral)
// ---------------------------------------------------------------------------

/// Kernel from an arbitrary even nonnegative density supported in
/// |x| <= support_radius (d <= 3).  fourier(xi) = sum w a(x) cos(2 pi x.xi);
/// mass and moments come from the same tensor quadrature grid.
inline Kernel make_numeric_kernel(int dim, const RealFunction &evaluate,
                                  double support_radius) {
    if (dim < 1 || dim > 3) {
        throw InvalidParameterError("make_numeric_kernel: dim must be 1, 2, or 3");
    }
    if (!(support_radius > 0.0) || !std::isfinite(support_radius)) {
        throw InvalidParameterError("make_numeric_kernel: support_radius must be positive");
    }

    // Probe evenness and nonnegativity on a low-discrepancy sample.
    double max_abs = 0.0;
    std::vector<double> probe(dim);
    std::vector<double> nprobe(dim);
    std::vector<double> probe_vals(256);
    for (int i = 0; i < 256; ++i) {
        kronecker_point(static_cast<uint64_t>(i), dim, probe);
        for (int d = 0; d < dim; ++d) {
            probe[d] = (2.0 * probe[d] - 1.0) * support_radius;
        }
        probe_vals[i] = evaluate(probe);
        max_abs = std::max(max_abs, std::abs(probe_vals[i]));
    }
    for (int i = 0; i < 256; ++i) {
        kronecker_point(static_cast<uint64_t>(i), dim, probe);
        for (int d = 0; d < dim; ++d) {
            probe[d] = (2.0 * probe[d] - 1.0) * support_radius;
            nprobe[d] = -probe[d];
        }
        if (probe_vals[i] < -1e-12 * max_abs) {
            throw InvalidKernelError("make_numeric_kernel: negative kernel value sampled");
        }
        if (std::abs(probe_vals[i] - evaluate(nprobe)) > 1e-10 * (max_abs + 1e-300)) {
            throw AssumptionViolationError(
                "make_numeric_kernel: kernel is not even on the probe set");
        }
    }

    const auto grid = detail::make_tensor_grid(dim, evaluate, support_radius);

    Kernel k;
    k.dim = dim;
    k.is_radial = false;
    k.fourier_kind = FourierKind::numeric;
    k.support_radius = support_radius;
    k.evaluate = evaluate;

    double mass = 0.0;
    for (double v : grid->values) {
        mass += v;
    }
    if (!(mass > 0.0)) {
        throw InvalidKernelError("make_numeric_kernel: kernel mass must be positive");
    }
    k.mass = mass;

    k.second_moment_matrix.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (size_t p = 0; p < grid->values.size(); ++p) {
        const double *x = &grid->coords[p * dim];
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                k.second_moment_matrix[static_cast<size_t>(i) * dim + j] +=
                    grid->values[p] * x[i] * x[j];
            }
        }
    }
    if (dim <= 3) {
        const auto ev = sym_eigenvalues(k.second_moment_matrix, dim);
        if (!(ev[0] > 0.0)) {
            throw InvalidKernelError(
                "make_numeric_kernel: second-moment matrix is not positive definite");
        }
    }

    const int d = dim;
    k.fourier = [grid, d](std::span<const double> xi) {
        double acc = 0.0;
        for (size_t p = 0; p < grid->values.size(); ++p) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) {
                dot += grid->coords[p * d + i] * xi[i];
            }
            acc += grid->values[p] * std::cos(2.0 * M_PI * dot);
        }
        return acc;
    };
    k.fourier_gap = [grid, d](std::span<const double> xi) {
        // mass - ahat = sum w a(x) (1 - cos) = sum w a(x) 2 sin^2(pi x.xi).
        double acc = 0.0;
        for (size_t p = 0; p < grid->values.size(); ++p) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) {
                dot += grid->coords[p * d + i] * xi[i];
            }
            const double s = std::sin(M_PI * dot);
            acc += grid->values[p] * 2.0 * s * s;
        }
        return acc;
    };

    // Roughly six quadrature nodes per oscillation period are required.
    k.resolved_band =
        static_cast<double>(grid->axis_nodes.size()) / (6.0 * 2.0 * support_radius);

    auto self = std::make_shared<Kernel>(k);
    k.tail_bound = detail::numeric_tail_bound(dim, false, self);
    return k;
}

/// Kernel from a radial profile rho(r) supported in [0, support_radius]
/// (d <= 3).  Transforms via the radial kernels cos / J0 / sinc.
inline Kernel make_radial_numeric_kernel(int dim,
                                         const std::function<double(double)> &profile,
                                         double support_radius) {
    if (dim < 1 || dim > 3) {
        throw InvalidParameterError("make_radial_numeric_kernel: dim must be 1, 2, or 3");
    }
    if (!(support_radius > 0.0) || !std::isfinite(support_radius)) {
        throw InvalidParameterError(
            "make_radial_numeric_kernel: support_radius must be positive");
    }

    // Radial quadrature on [0, R]: uniform panels, order-16 Gauss-Legendre.
    const int panels = 32;
    const int order = 16;
    const GaussLegendre gl = gauss_legendre(order);
    auto radii = std::make_shared<std::vector<double>>();
    auto wvals = std::make_shared<std::vector<double>>(); // S_{d-1} r^{d-1} w rho(r)
    const double surf = sphere_surface(dim);
    for (int p = 0; p < panels; ++p) {
        const double lo = support_radius * p / panels;
        const double hi = support_radius * (p + 1) / panels;
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        for (int k = 0; k < order; ++k) {
            const double r = mid + half * gl.x[k];
            const double rho = profile(r);
            if (rho < 0.0) {
                throw InvalidKernelError(
                    "make_radial_numeric_kernel: negative profile value at r = " +
                    std::to_string(r));
            }
            radii->push_back(r);
            wvals->push_back(half * gl.w[k] * surf * std::pow(r, dim - 1) * rho);
        }
    }

    Kernel k;
    k.dim = dim;
    k.is_radial = true;
    k.fourier_kind = FourierKind::numeric;
    k.support_radius = support_radius;
    k.evaluate = [profile](std::span<const double> x) {
        return profile(std::sqrt(detail::sqnorm(x)));
    };

    double mass = 0.0;
    double second = 0.0; // integral |x|^2 a
    for (size_t i = 0; i < radii->size(); ++i) {
        mass += (*wvals)[i];
        second += (*wvals)[i] * (*radii)[i] * (*radii)[i];
    }
    if (!(mass > 0.0)) {
        throw InvalidKernelError("make_radial_numeric_kernel: kernel mass must be positive");
    }
    k.mass = mass;
    k.second_moment_matrix.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        k.second_moment_matrix[static_cast<size_t>(i) * dim + i] = second / dim;
    }

    const int d = dim;
    auto omega = [d](double z) {
        switch (d) {
        case 1:
            return std::cos(z);
        case 2:
            return std::cyl_bessel_j(0.0, std::abs(z));
        default:
            return (std::abs(z) < 1e-3) ? 1.0 - z * z / 6.0 * (1.0 - z * z / 20.0)
                                        : std::sin(z) / z;
        }
    };
    auto one_minus_omega = [d](double z) {
        switch (d) {
        case 1:
            return one_minus_cos(z);
        case 2:
            return one_minus_j0(z);
        default:
            return one_minus_sinc(z);
        }
    };
    k.fourier = [radii, wvals, omega](std::span<const double> xi) {
        const double r = std::sqrt(detail::sqnorm(xi));
        double acc = 0.0;
        for (size_t i = 0; i < radii->size(); ++i) {
            acc += (*wvals)[i] * omega(2.0 * M_PI * (*radii)[i] * r);
        }
        return acc;
    };
    k.fourier_gap = [radii, wvals, one_minus_omega](std::span<const double> xi) {
        const double r = std::sqrt(detail::sqnorm(xi));
        double acc = 0.0;
        for (size_t i = 0; i < radii->size(); ++i) {
            acc += (*wvals)[i] * one_minus_omega(2.0 * M_PI * (*radii)[i] * r);
        }
        return acc;
    };

    // Roughly six quadrature nodes per oscillation period are required.
    k.resolved_band = static_cast<double>(radii->size()) / (6.0 * support_radius);

    auto self = std::make_shared<Kernel>(k);
    k.tail_bound = detail::numeric_tail_bound(dim, true, self);
    return k;
}

// ---------------------------------------------------------------------------
// Scaling a -> a_eps
// ---------------------------------------------------------------------------

/// a_eps(x) = eps^d a(eps x): mass preserved, fourier_eps(xi) = ahat(xi/eps).
inline Kernel scale_kernel(const Kernel &k, double eps) {
    if (!(eps > 0.0)) {
        throw InvalidParameterError("scale_kernel: eps must be positive");
    }
    if (eps == 1.0) {
        return k;
    }
    auto inner = std::make_shared<const Kernel>(k);
    Kernel s;
    s.dim = k.dim;
    s.mass = k.mass;
    s.is_radial = k.is_radial;
    s.fourier_kind = k.fourier_kind;
    if (k.gaussian_sigma) {
        s.gaussian_sigma = *k.gaussian_sigma / eps;
    }
    s.support_radius = k.support_radius / eps;
    s.resolved_band = k.resolved_band * eps;
    const int dim = k.dim;
    const double jac = std::pow(eps, dim);
    s.evaluate = [inner, eps, jac, dim](std::span<const double> x) {
        std::array<double, kMaxDim> buf{};
        for (int d = 0; d < dim; ++d) {
            buf[d] = eps * x[d];
        }
        return jac * inner->evaluate(std::span<const double>(buf.data(), dim));
    };
    s.fourier = [inner, eps, dim](std::span<const double> xi) {
        std::array<double, kMaxDim> buf{};
        for (int d = 0; d < dim; ++d) {
            buf[d] = xi[d] / eps;
        }
        return inner->fourier(std::span<const double>(buf.data(), dim));
    };
    s.fourier_gap = [inner, eps, dim](std::span<const double> xi) {
        std::array<double, kMaxDim> buf{};
        for (int d = 0; d < dim; ++d) {
            buf[d] = xi[d] / eps;
        }
        return inner->fourier_gap(std::span<const double>(buf.data(), dim));
    };
    s.tail_bound = [inner, eps, jac](double R) {
        return jac * inner->tail_bound(R / eps);
    };
    s.second_moment_matrix = k.second_moment_matrix;
    for (double &v : s.second_moment_matrix) {
        v /= eps * eps;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Model parameters and assumption validation
// ---------------------------------------------------------------------------

/// The kernel pair (a+, a-) with mortality m and the derived constants.
/// Construction checks structure only (matching dimensions, positive m);
/// the model assumptions are checked by validate_assumptions so that
/// deliberately inadmissible models can still be built and reported on.
struct ModelParams {
    Kernel a_plus;
    Kernel a_minus;
    double mortality = 0.0;

    ModelParams(Kernel plus, Kernel minus, double m)
        : a_plus(std::move(plus)), a_minus(std::move(minus)), mortality(m) {
        if (a_plus.dim != a_minus.dim) {
            throw InvalidParameterError("ModelParams: kernel dimensions differ");
        }
        if (!(m > 0.0)) {
            throw InvalidParameterError("ModelParams: mortality must be positive");
        }
    }

    int dim() const { return a_plus.dim; }
    double kappa_plus() const { return a_plus.mass; }
    double kappa_minus() const { return a_minus.mass; }
    /// Mean-field equilibrium density (kappa+ - m)/kappa-; positive iff A2.
    double q_star() const { return (kappa_plus() - mortality) / kappa_minus(); }

    /// J*(x) = a+(x) - q* a-(x).
    double j_star(std::span<const double> x) const {
        return a_plus.evaluate(x) - q_star() * a_minus.evaluate(x);
    }
    /// Jhat*(xi) = ahat+(xi) - q* ahat-(xi).
    double j_star_hat(std::span<const double> xi) const {
        return a_plus.fourier(xi) - q_star() * a_minus.fourier(xi);
    }
};

/// One assumption check: name, verdict, worst-case margin, free-form detail.
struct AssumptionCheck {
    std::string name;
    bool passed = false;
    double margin = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;

    bool all_passed() const {
        for (const auto &c : checks) {
            if (!c.passed) {
                return false;
            }
        }
        return true;
    }
    const AssumptionCheck *find(const std::string &name) const {
        for (const auto &c : checks) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }
};

/// Absolute tolerance for the pointwise J* >= 0 check: tiny negative values
/// from rounding must not fail validation.
inline constexpr double kTolA3 = 1e-12;

namespace detail {

/// Smallest R with tail_bound(R) <= tol * mass, by doubling; NaN if none found.
inline double integrable_tail_radius(const Kernel &k, double tol) {
    double R = 0.5;
    for (int i = 0; i < 60; ++i) {
        if (k.tail_bound(R) <= tol * k.mass) {
            return R;
        }
        R *= 2.0;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace detail

/// Check (A1) evenness/nonnegativity/transform integrability, (A2) kappa+ > m,
/// (A3) J* >= -tol on a low-discrepancy sample, (A4) positive-definite second
/// moments of a+, and the spectral gap kappa+ - Jhat*(xi) > 0 on a frequency
/// grid.  Failures are reported, never thrown.
inline ValidationReport validate_assumptions(const ModelParams &p) {
    ValidationReport rep;
    const int dim = p.dim();
    const double r_eff =
        std::max(p.a_plus.effective_radius(), p.a_minus.effective_radius());

    // (A1) evenness + nonnegativity on probes; integrability via tail_bound.
    {
        AssumptionCheck c;
        c.name = "A1";
        double worst_asym = 0.0;
        double worst_neg = 0.0;
        std::vector<double> x(dim);
        std::vector<double> nx(dim);
        for (const Kernel *k : {&p.a_plus, &p.a_minus}) {
            double scale = 0.0;
            std::vector<double> vals(256);
            for (int i = 0; i < 256; ++i) {
                kronecker_point(static_cast<uint64_t>(i), dim, x);
                for (int d = 0; d < dim; ++d) {
                    x[d] = (2.0 * x[d] - 1.0) * r_eff;
                }
                vals[i] = k->evaluate(x);
                scale = std::max(scale, std::abs(vals[i]));
            }
            for (int i = 0; i < 256; ++i) {
                kronecker_point(static_cast<uint64_t>(i), dim, x);
                for (int d = 0; d < dim; ++d) {
                    x[d] = (2.0 * x[d] - 1.0) * r_eff;
                    nx[d] = -x[d];
                }
                worst_asym = std::max(
                    worst_asym, std::abs(vals[i] - k->evaluate(nx)) / (scale + 1e-300));
                worst_neg = std::min(worst_neg, vals[i] / (scale + 1e-300));
            }
        }
        const double rp = detail::integrable_tail_radius(p.a_plus, 1e-8);
        const double rm = detail::integrable_tail_radius(p.a_minus, 1e-8);
        const bool tails_ok = std::isfinite(rp) && std::isfinite(rm);
        c.passed = (worst_asym <= 1e-10) && (worst_neg >= -1e-12) && tails_ok;
        c.margin = -worst_asym;
        c.detail = "max relative asymmetry " + std::to_string(worst_asym) +
                   (tails_ok ? ", transform tails < 1e-8 mass at R = " +
                                   std::to_string(std::max(rp, rm))
                             : ", transform tail does not decay");
        rep.checks.push_back(std::move(c));
    }

    // (A2) kappa+ > m.
    {
        AssumptionCheck c;
        c.name = "A2";
        c.margin = p.kappa_plus() - p.mortality;
        c.passed = c.margin > 0.0;
        c.detail = "kappa+ - m = " + std::to_string(c.margin);
        rep.checks.push_back(std::move(c));
    }

    // (A3) J* >= -tol on 4096 low-discrepancy points in the effective support.
    {
        AssumptionCheck c;
        c.name = "A3";
        double min_j = std::numeric_limits<double>::infinity();
        std::vector<double> x(dim);
        for (int i = 0; i < 4096; ++i) {
            kronecker_point(static_cast<uint64_t>(i), dim, x);
            for (int d = 0; d < dim; ++d) {
                x[d] = (2.0 * x[d] - 1.0) * r_eff;
            }
            min_j = std::min(min_j, p.j_star(x));
        }
        // Include the origin, where competition peaks matter most.
        std::fill(x.begin(), x.end(), 0.0);
        min_j = std::min(min_j, p.j_star(x));
        c.margin = min_j;
        c.passed = min_j >= -kTolA3;
        c.detail = "min J* over sample = " + std::to_string(min_j);
        rep.checks.push_back(std::move(c));
    }

    // (A4) second moments of a+ exist and are positive definite.
    {
        AssumptionCheck c;
        c.name = "A4";
        bool finite = true;
        for (double v : p.a_plus.second_moment_matrix) {
            finite = finite && std::isfinite(v);
        }
        double min_ev = -std::numeric_limits<double>::infinity();
        if (finite && dim <= 3) {
            min_ev = sym_eigenvalues(p.a_plus.second_moment_matrix, dim)[0];
        } else if (finite) {
            // Gershgorin lower bound for d > 3.
            min_ev = std::numeric_limits<double>::infinity();
            for (int i = 0; i < dim; ++i) {
                double row = p.a_plus.second_moment_matrix[static_cast<size_t>(i) * dim + i];
                for (int j = 0; j < dim; ++j) {
                    if (j != i) {
                        row -= std::abs(
                            p.a_plus.second_moment_matrix[static_cast<size_t>(i) * dim + j]);
                    }
                }
                min_ev = std::min(min_ev, row);
            }
        }
        c.margin = min_ev;
        c.passed = finite && min_ev > 0.0;
        c.detail = "min eigenvalue of second-moment matrix = " + std::to_string(min_ev);
        rep.checks.push_back(std::move(c));
    }

    // Spectral gap kappa+ - Jhat*(xi) > 0 on a frequency grid.
    {
        AssumptionCheck c;
        c.name = "posFT";
        const double q_star = p.q_star();
        double min_gap = std::numeric_limits<double>::infinity();
        const double rp = detail::integrable_tail_radius(p.a_plus, 1e-8);
        double R = std::isfinite(rp) ? rp : 8.0;
        R = std::min(R, std::min(p.a_plus.resolved_band, p.a_minus.resolved_band));
        if (p.a_plus.is_radial && p.a_minus.is_radial) {
            const RadialQuadrature q = make_radial_quadrature(dim, R, 1e-9, 16);
            for (double r : q.nodes) {
                min_gap = std::min(min_gap, p.a_plus.gap_radial(r) +
                                                q_star * p.a_minus.fourier_radial(r));
            }
        } else {
            std::vector<double> xi(dim);
            for (int i = 0; i < 2048; ++i) {
                kronecker_point(static_cast<uint64_t>(i), dim, xi);
                for (int d = 0; d < dim; ++d) {
                    xi[d] = (2.0 * xi[d] - 1.0) * R;
                }
                min_gap = std::min(min_gap, p.a_plus.fourier_gap(xi) +
                                                q_star * p.a_minus.fourier(xi));
            }
        }
        c.margin = min_gap;
        c.passed = min_gap > 0.0;
        c.detail = "min of kappa+ - Jhat* over grid = " + std::to_string(min_gap);
        rep.checks.push_back(std::move(c));
    }

    return rep;
}

} // namespace slm
