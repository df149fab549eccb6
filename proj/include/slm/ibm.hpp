/**
 * @file ibm.hpp
 * @brief Individual-based simulator: exact event-driven (Gillespie) dynamics
 *        of the spatial birth-death process on a d-dimensional torus, with
 *        density and pair-correlation estimators across replicates.
 *
 * Each individual at x gives birth at rate kappa+ (offspring displaced by a
 * draw from a+_eps/kappa+, torus-wrapped) and dies at rate
 * m + sum_y a-_eps(x - y).  Competition is truncated at a radius carrying
 * less than 1e-8 of the kernel mass, which keeps event updates local via
 * cell lists.  Replicates use disjoint counter-based RNG streams, so results
 * are bitwise reproducible for a given seed regardless of thread count.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "special_math.hpp"

namespace slm {

// ---------------------------------------------------------------------------
// Counter-based RNG (Philox4x32-10)
// ---------------------------------------------------------------------------

/// One block of the Philox4x32 bijection with 10 rounds; reference constants.
inline std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> ctr,
                                             std::array<uint32_t, 2> key) {
    constexpr uint32_t kMul0 = 0xD2511F53u;
    constexpr uint32_t kMul1 = 0xCD9E8D57u;
    constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
        const uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
        const std::array<uint32_t, 4> next = {
            static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
            static_cast<uint32_t>(p1),
            static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
            static_cast<uint32_t>(p0),
        };
        ctr = next;
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// Stream RNG over the Philox block cipher: `seed` keys the cipher and
/// `stream` selects a disjoint counter plane, so replicate streams drawn from
/// the same seed never overlap.
class CounterRng {
  public:
    CounterRng(uint64_t seed, uint64_t stream)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          base_{0u, 0u, static_cast<uint32_t>(stream),
                static_cast<uint32_t>(stream >> 32)} {}

    uint32_t next_u32() {
        if (idx_ == 4) {
            buf_ = philox4x32_10(base_, key_);
            if (++base_[0] == 0u) {
                ++base_[1];
            }
            idx_ = 0;
        }
        return buf_[idx_++];
    }

    uint64_t next_u64() {
        const uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on the open interval (0, 1): midpoints of a 2^52 lattice.
    double next_open01() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Uniform integer in [0, n); n >= 1.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (second value cached).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(next_open01()));
        const double theta = 2.0 * M_PI * next_double();
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Exponential with unit rate.
    double next_exponential() { return -std::log(next_open01()); }

    /// Poisson(lambda) by multiplicative counting in chunks small enough that
    /// exp(-chunk) stays far from underflow; exact for any lambda >= 0.
    uint64_t next_poisson(double lambda) {
        uint64_t total = 0;
        while (lambda > 30.0) {
            total += poisson_small(25.0);
            lambda -= 25.0;
        }
        return total + poisson_small(lambda);
    }

  private:
    uint64_t poisson_small(double lambda) {
        if (!(lambda > 0.0)) {
            return 0;
        }
        const double threshold = std::exp(-lambda);
        uint64_t k = 0;
        double prod = 1.0;
        do {
            ++k;
            prod *= next_open01();
        } while (prod > threshold);
        return k - 1;
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> base_;
    std::array<uint32_t, 4> buf_{};
    int idx_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Simulation context and configuration
// ---------------------------------------------------------------------------

/// Immutable per-run data: scaled kernels, truncation radius, cell geometry,
/// and the birth-displacement sampler.
struct SimContext {
    int dim = 1;
    double torus_side = 0.0;  ///< L
    double eps = 0.0;
    double kappa_plus = 0.0;
    double kappa_minus = 0.0;
    double m = 0.0;
    Kernel comp_scaled;       ///< a-_eps, evaluated on min-image displacements
    double cutoff = 0.0;      ///< competition truncation radius (scaled units)
    int cells_per_axis = 1;
    double cell_side = 0.0;

    // Birth displacement sampler: exact for the Gaussian family, inverse-CDF
    // table on the radial profile otherwise.
    bool gaussian_birth = true;
    double birth_sigma = 0.0;           ///< scaled sigma+/eps (Gaussian case)
    std::vector<double> birth_icdf;     ///< r(u) on a uniform u-grid (table case)

    size_t n_cells() const {
        size_t n = 1;
        for (int d = 0; d < dim; ++d) {
            n *= static_cast<size_t>(cells_per_axis);
        }
        return n;
    }
};

/// Point configuration with incremental rate caches and cell lists.
/// Point i occupies points[i*dim .. i*dim+dim); death_rate[i] caches
/// m + sum_j a-_eps(x_i - x_j) over the truncated neighborhood.
struct PointConfiguration {
    int dim = 1;
    double torus_side = 0.0;
    std::vector<double> points;
    std::vector<double> death_rate;
    double total_death = 0.0;
    uint64_t events_since_rebuild = 0;

    std::vector<std::vector<uint32_t>> cell_members;
    std::vector<uint32_t> cell_of;
    std::vector<uint32_t> slot_of;

    size_t size() const { return death_rate.size(); }
    const double *point(size_t i) const { return points.data() + i * dim; }
};

enum class EventKind { birth, death, censored, extinction };

/// Outcome of one stepper call.  `censored` means the drawn waiting time
/// exceeded the caller's horizon and no event was applied; `extinction` is
/// returned for an empty configuration (terminal, not an error).
struct EventRecord {
    EventKind kind = EventKind::censored;
    double dt = 0.0;                      ///< drawn exponential waiting time
    std::array<double, 3> position{};     ///< child (birth) or removed (death)
    size_t population_after = 0;
};

namespace detail {

/// Smallest radius containing all but 1e-8 of the kernel's real-space mass.
inline double real_space_cutoff(const Kernel &k) {
    if (std::isfinite(k.support_radius)) {
        return k.support_radius;
    }
    if (k.gaussian_sigma) {
        // Tail fraction of a Gaussian beyond r is gamma_q(d/2, r^2/(2 sigma^2)).
        const double sigma = *k.gaussian_sigma;
        double lo = sigma;
        double hi = sigma;
        while (gamma_q(0.5 * k.dim, hi * hi / (2.0 * sigma * sigma)) > 1e-8) {
            lo = hi;
            hi *= 2.0;
        }
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (gamma_q(0.5 * k.dim, mid * mid / (2.0 * sigma * sigma)) > 1e-8) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return hi;
    }
    return k.effective_radius();
}

/// Componentwise minimum-image displacement on the torus, into out[0..dim).
inline void min_image(const SimContext &ctx, const double *x, const double *y,
                      double *out) {
    for (int d = 0; d < ctx.dim; ++d) {
        double diff = x[d] - y[d];
        diff -= ctx.torus_side * std::round(diff / ctx.torus_side);
        out[d] = diff;
    }
}

/// Truncated scaled competition kernel on the min-image displacement;
/// zero beyond the cutoff radius.
inline double competition(const SimContext &ctx, const double *x, const double *y) {
    std::array<double, 3> diff{};
    min_image(ctx, x, y, diff.data());
    double r2 = 0.0;
    for (int d = 0; d < ctx.dim; ++d) {
        r2 += diff[d] * diff[d];
    }
    if (r2 > ctx.cutoff * ctx.cutoff) {
        return 0.0;
    }
    return ctx.comp_scaled.evaluate(std::span<const double>(diff.data(), ctx.dim));
}

inline uint32_t flat_cell(const SimContext &ctx, const double *x) {
    uint32_t id = 0;
    for (int d = 0; d < ctx.dim; ++d) {
        int c = static_cast<int>(x[d] / ctx.cell_side);
        c = std::clamp(c, 0, ctx.cells_per_axis - 1);
        id = id * static_cast<uint32_t>(ctx.cells_per_axis) + static_cast<uint32_t>(c);
    }
    return id;
}

/// Visit every point index stored in the 3^dim block of cells around x
/// (deduplicated, so small tori with wrapped aliases are handled).
template <class Visitor>
inline void for_cell_neighborhood(const SimContext &ctx, const PointConfiguration &cfg,
                                  const double *x, Visitor &&visit) {
    const int nc = ctx.cells_per_axis;
    std::array<int, 3> base{};
    for (int d = 0; d < ctx.dim; ++d) {
        base[d] = std::clamp(static_cast<int>(x[d] / ctx.cell_side), 0, nc - 1);
    }
    std::array<uint32_t, 27> seen{};
    int n_seen = 0;
    const int spans = ctx.dim >= 2 ? 3 : 1;
    const int spans3 = ctx.dim >= 3 ? 3 : 1;
    for (int i = -1; i <= 1; ++i) {
        for (int j = 0; j < spans; ++j) {
            for (int k = 0; k < spans3; ++k) {
                std::array<int, 3> off{i, j - 1, k - 1};
                uint32_t id = 0;
                for (int d = 0; d < ctx.dim; ++d) {
                    const int c = (base[d] + off[d] + nc) % nc;
                    id = id * static_cast<uint32_t>(nc) + static_cast<uint32_t>(c);
                }
                bool duplicate = false;
                for (int s = 0; s < n_seen; ++s) {
                    if (seen[s] == id) {
                        duplicate = true;
                        break;
                    }
                }
                if (duplicate) {
                    continue;
                }
                seen[n_seen++] = id;
                for (uint32_t member : cfg.cell_members[id]) {
                    visit(member);
                }
            }
        }
    }
}

/// Recompute every death rate and the total from scratch (cell-accelerated).
inline void rebuild_caches(const SimContext &ctx, PointConfiguration &cfg) {
    const size_t n = cfg.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double rate = ctx.m;
        const double *xi = cfg.point(i);
        for_cell_neighborhood(ctx, cfg, xi, [&](uint32_t j) {
            if (j != i) {
                rate += competition(ctx, xi, cfg.point(j));
            }
        });
        cfg.death_rate[i] = rate;
        total += rate;
    }
    cfg.total_death = total;
    cfg.events_since_rebuild = 0;
}

inline void insert_into_cells(const SimContext &ctx, PointConfiguration &cfg,
                              size_t i) {
    const uint32_t cell = flat_cell(ctx, cfg.point(i));
    cfg.cell_of[i] = cell;
    cfg.slot_of[i] = static_cast<uint32_t>(cfg.cell_members[cell].size());
    cfg.cell_members[cell].push_back(static_cast<uint32_t>(i));
}

} // namespace detail

/// Build the run context; validates the finite-size guards.
inline SimContext make_sim_context(const ModelParams &p, double eps, double L) {
    if (!(eps > 0.0) || !(eps <= 1.0)) {
        throw InvalidParameterError("make_sim_context: eps must lie in (0, 1]");
    }
    if (!(L > 0.0) || !std::isfinite(L)) {
        throw InvalidParameterError("make_sim_context: torus side must be positive");
    }
    SimContext ctx;
    ctx.dim = p.dim();
    ctx.torus_side = L;
    ctx.eps = eps;
    ctx.kappa_plus = p.kappa_plus();
    ctx.kappa_minus = p.kappa_minus();
    ctx.m = p.mortality;

    // Finite-size guard: the torus must span many interaction ranges, where a
    // kernel's range is one sixth of its effective radius (sigma for the
    // Gaussian family).
    const double range =
        std::max(p.a_plus.effective_radius(), p.a_minus.effective_radius()) / 6.0;
    if (L * eps < 10.0 * range) {
        throw InvalidParameterError(
            "make_sim_context: torus spans fewer than 10 kernel ranges (L*eps = " +
            std::to_string(L * eps) + ", need >= " + std::to_string(10.0 * range) +
            ")");
    }

    ctx.comp_scaled = scale_kernel(p.a_minus, eps);
    ctx.cutoff = detail::real_space_cutoff(p.a_minus) / eps;
    if (L < 2.0 * ctx.cutoff) {
        throw InvalidParameterError(
            "make_sim_context: torus side must be at least twice the truncated "
            "competition range (" +
            std::to_string(2.0 * ctx.cutoff) + ")");
    }
    ctx.cells_per_axis = std::max(1, static_cast<int>(std::floor(L / ctx.cutoff)));
    ctx.cell_side = L / ctx.cells_per_axis;

    // Birth displacement sampler for the scaled dispersal kernel a+_eps.
    if (p.a_plus.gaussian_sigma) {
        ctx.gaussian_birth = true;
        ctx.birth_sigma = *p.a_plus.gaussian_sigma / eps;
    } else if (p.a_plus.is_radial && std::isfinite(p.a_plus.support_radius)) {
        ctx.gaussian_birth = false;
        // Inverse CDF of the radial displacement law, density proportional to
        // r^{d-1} a+(r) on [0, support]; scaling by 1/eps happens at draw time.
        const int dim = ctx.dim;
        const double R = p.a_plus.support_radius;
        const int fine = 1 << 14;
        std::vector<double> cdf(fine + 1, 0.0);
        const double h = R / fine;
        double acc = 0.0;
        double prev = 0.0;
        for (int i = 1; i <= fine; ++i) {
            const double r = i * h;
            const double f = std::pow(r, dim - 1) * p.a_plus.evaluate_radial(r);
            acc += 0.5 * (prev + f) * h;
            prev = f;
            cdf[i] = acc;
        }
        if (!(acc > 0.0)) {
            throw InvalidKernelError("make_sim_context: dispersal kernel has no mass");
        }
        const int table = 4096;
        ctx.birth_icdf.assign(table + 1, 0.0);
        int pos = 0;
        for (int k = 0; k <= table; ++k) {
            const double target = acc * static_cast<double>(k) / table;
            while (pos < fine && cdf[pos + 1] < target) {
                ++pos;
            }
            const double lo = cdf[pos];
            const double hi = cdf[pos + 1 > fine ? fine : pos + 1];
            const double frac = hi > lo ? (target - lo) / (hi - lo) : 0.0;
            ctx.birth_icdf[k] = (pos + frac) * h;
        }
        ctx.birth_icdf[table] = R;
    } else {
        throw InvalidParameterError(
            "make_sim_context: birth sampling requires a Gaussian or a "
            "compactly supported radial dispersal kernel");
    }
    return ctx;
}

/// Draw a torus-wrapped offspring displacement about the parent.
inline void sample_birth_displacement(const SimContext &ctx, CounterRng &rng,
                                      double *out) {
    if (ctx.gaussian_birth) {
        for (int d = 0; d < ctx.dim; ++d) {
            out[d] = ctx.birth_sigma * rng.next_gaussian();
        }
        return;
    }
    const double u = rng.next_double() * (ctx.birth_icdf.size() - 1);
    const size_t k = std::min(static_cast<size_t>(u), ctx.birth_icdf.size() - 2);
    const double frac = u - static_cast<double>(k);
    const double r =
        (ctx.birth_icdf[k] + frac * (ctx.birth_icdf[k + 1] - ctx.birth_icdf[k])) /
        ctx.eps;
    if (ctx.dim == 1) {
        out[0] = rng.next_double() < 0.5 ? -r : r;
    } else if (ctx.dim == 2) {
        const double theta = 2.0 * M_PI * rng.next_double();
        out[0] = r * std::cos(theta);
        out[1] = r * std::sin(theta);
    } else {
        const double z = 2.0 * rng.next_double() - 1.0;
        const double phi = 2.0 * M_PI * rng.next_double();
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        out[0] = r * s * std::cos(phi);
        out[1] = r * s * std::sin(phi);
        out[2] = r * z;
    }
}

/// Configuration from explicit positions (flattened, size n*dim); builds the
/// cell lists and rate caches.
inline PointConfiguration make_configuration(const SimContext &ctx,
                                             std::vector<double> flat_points) {
    if (flat_points.size() % ctx.dim != 0) {
        throw InvalidParameterError(
            "make_configuration: flattened point list must be a multiple of dim");
    }
    PointConfiguration cfg;
    cfg.dim = ctx.dim;
    cfg.torus_side = ctx.torus_side;
    cfg.points = std::move(flat_points);
    const size_t n = cfg.points.size() / ctx.dim;
    for (double v : cfg.points) {
        if (!(v >= 0.0) || !(v < ctx.torus_side)) {
            throw InvalidParameterError(
                "make_configuration: coordinates must lie in [0, L)");
        }
    }
    cfg.death_rate.assign(n, 0.0);
    cfg.cell_members.assign(ctx.n_cells(), {});
    cfg.cell_of.assign(n, 0);
    cfg.slot_of.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        detail::insert_into_cells(ctx, cfg, i);
    }
    detail::rebuild_caches(ctx, cfg);
    return cfg;
}

/// Poisson(q0) initial state: Poisson-distributed count, uniform positions.
inline PointConfiguration make_poisson_configuration(const SimContext &ctx,
                                                     double q0, CounterRng &rng) {
    if (!(q0 >= 0.0) || !std::isfinite(q0)) {
        throw InvalidParameterError(
            "make_poisson_configuration: intensity must be nonnegative");
    }
    double volume = 1.0;
    for (int d = 0; d < ctx.dim; ++d) {
        volume *= ctx.torus_side;
    }
    const uint64_t n = rng.next_poisson(q0 * volume);
    std::vector<double> flat(n * ctx.dim);
    for (double &v : flat) {
        v = rng.next_double() * ctx.torus_side;
    }
    return make_configuration(ctx, std::move(flat));
}

/// Brute-force cache audit: maximum relative error of the per-point death
/// rates and the cached total, against a cell-free double loop.
inline double verify_death_cache(const SimContext &ctx, const PointConfiguration &cfg) {
    const size_t n = cfg.size();
    double worst = 0.0;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double rate = ctx.m;
        for (size_t j = 0; j < n; ++j) {
            if (j != i) {
                rate += detail::competition(ctx, cfg.point(i), cfg.point(j));
            }
        }
        total += rate;
        worst = std::max(worst,
                         std::abs(cfg.death_rate[i] - rate) / std::max(1.0, rate));
    }
    if (n > 0) {
        worst = std::max(worst,
                         std::abs(cfg.total_death - total) / std::max(1.0, total));
    }
    return worst;
}

/// One exact event: exponential waiting time at the total rate
/// N kappa+ + sum_i death_rate[i], then a birth or death chosen in
/// proportion.  If the waiting time exceeds `max_dt` the state is left
/// untouched and a censored record is returned.  An empty configuration
/// yields a terminal extinction record.
inline EventRecord step_gillespie(const SimContext &ctx, PointConfiguration &cfg,
                                  CounterRng &rng,
                                  double max_dt = std::numeric_limits<double>::infinity()) {
    EventRecord ev;
    const size_t n = cfg.size();
    if (n == 0) {
        ev.kind = EventKind::extinction;
        return ev;
    }
    const double total_birth = static_cast<double>(n) * ctx.kappa_plus;
    const double total_rate = total_birth + cfg.total_death;
    ev.dt = rng.next_exponential() / total_rate;
    if (ev.dt > max_dt) {
        ev.kind = EventKind::censored;
        ev.population_after = n;
        return ev;
    }

    const double u = rng.next_double() * total_rate;
    if (u < total_birth) {
        // Birth: uniform parent (all share rate kappa+), displaced offspring.
        const size_t parent = std::min(static_cast<size_t>(u / ctx.kappa_plus), n - 1);
        std::array<double, 3> child{};
        const double *px = cfg.point(parent);
        do {
            std::array<double, 3> disp{};
            sample_birth_displacement(ctx, rng, disp.data());
            for (int d = 0; d < ctx.dim; ++d) {
                double v = std::fmod(px[d] + disp[d], ctx.torus_side);
                if (v < 0.0) {
                    v += ctx.torus_side;
                }
                child[d] = v;
            }
        } while (std::memcmp(child.data(), px, ctx.dim * sizeof(double)) == 0);

        const size_t i = n;
        for (int d = 0; d < ctx.dim; ++d) {
            cfg.points.push_back(child[d]);
        }
        cfg.death_rate.push_back(0.0);
        cfg.cell_of.push_back(0);
        cfg.slot_of.push_back(0);
        detail::insert_into_cells(ctx, cfg, i);
        double own = ctx.m;
        detail::for_cell_neighborhood(ctx, cfg, cfg.point(i), [&](uint32_t j) {
            if (j == i) {
                return;
            }
            const double val = detail::competition(ctx, cfg.point(i), cfg.point(j));
            if (val != 0.0) {
                cfg.death_rate[j] += val;
                own += val;
                cfg.total_death += val;
            }
        });
        cfg.death_rate[i] = own;
        cfg.total_death += own;
        ev.kind = EventKind::birth;
        for (int d = 0; d < ctx.dim; ++d) {
            ev.position[d] = child[d];
        }
    } else {
        // Death: point chosen in proportion to its cached rate.
        double v = u - total_birth;
        size_t victim = n - 1;
        for (size_t i = 0; i < n; ++i) {
            if (v < cfg.death_rate[i]) {
                victim = i;
                break;
            }
            v -= cfg.death_rate[i];
        }
        for (int d = 0; d < ctx.dim; ++d) {
            ev.position[d] = cfg.point(victim)[d];
        }
        detail::for_cell_neighborhood(ctx, cfg, cfg.point(victim), [&](uint32_t j) {
            if (j == victim) {
                return;
            }
            const double val = detail::competition(ctx, cfg.point(victim), cfg.point(j));
            if (val != 0.0) {
                cfg.death_rate[j] -= val;
                cfg.total_death -= val;
            }
        });
        cfg.total_death -= cfg.death_rate[victim];

        // Remove from its cell (swap-pop within the member list).
        auto &members = cfg.cell_members[cfg.cell_of[victim]];
        const uint32_t slot = cfg.slot_of[victim];
        members[slot] = members.back();
        cfg.slot_of[members[slot]] = slot;
        members.pop_back();
        // Swap-pop the point arrays; relocate the moved point's cell entry.
        const size_t last = n - 1;
        if (victim != last) {
            for (int d = 0; d < ctx.dim; ++d) {
                cfg.points[victim * ctx.dim + d] = cfg.points[last * ctx.dim + d];
            }
            cfg.death_rate[victim] = cfg.death_rate[last];
            cfg.cell_of[victim] = cfg.cell_of[last];
            cfg.slot_of[victim] = cfg.slot_of[last];
            cfg.cell_members[cfg.cell_of[victim]][cfg.slot_of[victim]] =
                static_cast<uint32_t>(victim);
        }
        cfg.points.resize(last * ctx.dim);
        cfg.death_rate.pop_back();
        cfg.cell_of.pop_back();
        cfg.slot_of.pop_back();
        ev.kind = EventKind::death;
    }

    ev.population_after = cfg.size();
    if (++cfg.events_since_rebuild >= (1u << 16)) {
        detail::rebuild_caches(ctx, cfg); // flush accumulated rounding drift
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Replicates and estimators
// ---------------------------------------------------------------------------

/// Final state of one replicate.
struct ReplicateResult {
    bool extinct = false;
    double t_reached = 0.0;
    uint64_t events = 0;
    std::vector<double> final_points; ///< flattened positions at t_end
};

/// Density and pair-correlation estimates across replicates.
struct MomentEstimate {
    int dim = 1;
    double eps = 0.0;
    double torus_side = 0.0;
    double t = 0.0;
    size_t n_replicates = 0;
    size_t n_extinct = 0;
    bool extinction_dominated = false; ///< every replicate died out

    double density = 0.0;     ///< mean points / L^d, extinct replicates as 0
    double density_se = 0.0;
    double surviving_density = 0.0;    ///< same, over surviving replicates only
    double surviving_density_se = 0.0;

    std::vector<double> pair_bin_edges;      ///< n_bins + 1 radii
    std::vector<double> pair_correlation;    ///< binned second-order estimates
    std::vector<double> pair_correlation_se;

    std::vector<ReplicateResult> replicates; ///< raw data for custom estimators
};

/// Tunables for run_replicates; defaults match the analytic modules.
struct ReplicateOptions {
    double q0 = std::numeric_limits<double>::quiet_NaN(); ///< NaN -> q*/2
    int threads = 1;
    int n_pair_bins = 24;
    double pair_r_max = 0.0; ///< 0 -> min(cutoff, L/2)
};

namespace detail {

inline double sample_mean(const std::vector<double> &v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double standard_error(const std::vector<double> &v, double mean) {
    if (v.size() < 2) {
        return 0.0;
    }
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / (static_cast<double>(v.size() - 1) *
                           static_cast<double>(v.size())));
}

/// Unordered pair counts by min-image distance bin (brute force; final
/// snapshots are small).
inline std::vector<uint64_t> pair_bin_counts(const SimContext &ctx,
                                             const std::vector<double> &flat,
                                             const std::vector<double> &edges) {
    std::vector<uint64_t> counts(edges.size() - 1, 0);
    const size_t n = flat.size() / ctx.dim;
    const double r_max = edges.back();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            std::array<double, 3> diff{};
            min_image(ctx, flat.data() + i * ctx.dim, flat.data() + j * ctx.dim,
                      diff.data());
            double r2 = 0.0;
            for (int d = 0; d < ctx.dim; ++d) {
                r2 += diff[d] * diff[d];
            }
            const double r = std::sqrt(r2);
            if (r >= r_max) {
                continue;
            }
            const size_t b = std::min(
                static_cast<size_t>(std::upper_bound(edges.begin(), edges.end(), r) -
                                    edges.begin()) -
                    1,
                counts.size() - 1);
            ++counts[b];
        }
    }
    return counts;
}

} // namespace detail

/// Run independent replicates of the process from Poisson(q0) initial data to
/// t_end and reduce density / pair-correlation estimates.  Replicate r uses
/// the RNG stream (seed, r); reductions run in replicate order, so the result
/// is bitwise independent of the thread count.
inline MomentEstimate run_replicates(const ModelParams &p, double eps, double L,
                                     double t_end, size_t n_replicates,
                                     uint64_t seed,
                                     const ReplicateOptions &opts = {}) {
    if (n_replicates == 0) {
        throw InvalidParameterError("run_replicates: need at least one replicate");
    }
    if (!(t_end >= 0.0)) {
        throw InvalidParameterError("run_replicates: t_end must be nonnegative");
    }
    const SimContext ctx = make_sim_context(p, eps, L);
    const double q0 = std::isnan(opts.q0) ? p.q_star() / 2.0 : opts.q0;
    if (!(q0 >= 0.0)) {
        throw InvalidParameterError(
            "run_replicates: initial intensity must be nonnegative (explicit q0 "
            "required when kappa+ <= m)");
    }

    std::vector<ReplicateResult> results(n_replicates);
    auto run_one = [&](size_t r) {
        CounterRng rng(seed, r);
        PointConfiguration cfg = make_poisson_configuration(ctx, q0, rng);
        ReplicateResult out;
        double t = 0.0;
        while (t < t_end) {
            const EventRecord ev = step_gillespie(ctx, cfg, rng, t_end - t);
            if (ev.kind == EventKind::censored) {
                t = t_end;
                break;
            }
            if (ev.kind == EventKind::extinction) {
                out.extinct = true;
                break;
            }
            t += ev.dt;
            ++out.events;
            if (cfg.size() == 0) {
                out.extinct = true;
                t = std::min(t, t_end);
                break;
            }
        }
        out.t_reached = out.extinct ? t : t_end;
        out.final_points = cfg.points;
        results[r] = std::move(out);
    };

    const size_t n_threads =
        std::min<size_t>(std::max(1, opts.threads), n_replicates);
    if (n_threads <= 1) {
        for (size_t r = 0; r < n_replicates; ++r) {
            run_one(r);
        }
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (size_t w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w] {
                for (size_t r = w; r < n_replicates; r += n_threads) {
                    run_one(r);
                }
            });
        }
        for (auto &th : pool) {
            th.join();
        }
    }

    MomentEstimate est;
    est.dim = ctx.dim;
    est.eps = eps;
    est.torus_side = L;
    est.t = t_end;
    est.n_replicates = n_replicates;
    double volume = 1.0;
    for (int d = 0; d < ctx.dim; ++d) {
        volume *= L;
    }

    std::vector<double> all_density;
    std::vector<double> surviving_density;
    all_density.reserve(n_replicates);
    for (const ReplicateResult &r : results) {
        const double dens =
            static_cast<double>(r.final_points.size() / ctx.dim) / volume;
        all_density.push_back(dens);
        if (r.extinct) {
            ++est.n_extinct;
        } else {
            surviving_density.push_back(dens);
        }
    }
    est.extinction_dominated = est.n_extinct == n_replicates;
    est.density = detail::sample_mean(all_density);
    est.density_se = detail::standard_error(all_density, est.density);
    est.surviving_density = detail::sample_mean(surviving_density);
    est.surviving_density_se =
        detail::standard_error(surviving_density, est.surviving_density);

    // Pair correlation over surviving replicates: ordered pair counts per
    // distance bin, normalized by L^d and the shell volume.
    const int n_bins = std::max(1, opts.n_pair_bins);
    const double r_max =
        opts.pair_r_max > 0.0 ? std::min(opts.pair_r_max, L / 2.0)
                              : std::min(ctx.cutoff, L / 2.0);
    est.pair_bin_edges.resize(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b) {
        est.pair_bin_edges[b] = r_max * static_cast<double>(b) / n_bins;
    }
    std::vector<std::vector<double>> per_bin(n_bins);
    for (const ReplicateResult &r : results) {
        if (r.extinct) {
            continue;
        }
        const std::vector<uint64_t> counts =
            detail::pair_bin_counts(ctx, r.final_points, est.pair_bin_edges);
        for (int b = 0; b < n_bins; ++b) {
            const double shell = ball_volume(ctx.dim, est.pair_bin_edges[b + 1]) -
                                 ball_volume(ctx.dim, est.pair_bin_edges[b]);
            per_bin[b].push_back(2.0 * static_cast<double>(counts[b]) /
                                 (volume * shell));
        }
    }
    est.pair_correlation.resize(n_bins);
    est.pair_correlation_se.resize(n_bins);
    for (int b = 0; b < n_bins; ++b) {
        est.pair_correlation[b] = detail::sample_mean(per_bin[b]);
        est.pair_correlation_se[b] =
            detail::standard_error(per_bin[b], est.pair_correlation[b]);
    }
    est.replicates = std::move(results);
    return est;
}

} // namespace slm
