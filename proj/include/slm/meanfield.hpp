/**
 * @file meanfield.hpp
 * @brief Closed-form mean-field density q_t of the space-homogeneous model,
 *        its time integral, and the spectral coefficient j(xi, t).
 *
 * q_t solves the logistic equation dq/dt = (kappa+ - m) q - kappa- q^2 and is
 * used in closed form throughout; the covariance ODEs integrate against it
 * analytically wherever possible.
 */

#pragma once

#include <cmath>
#include <span>
#include <utility>

#include "errors.hpp"
#include "kernels.hpp"

namespace slm {

/// Logistic mean-field trajectory q_t with 0 < q_0 < q* = (kappa+ - m)/kappa-.
struct MeanFieldTrajectory {
    ModelParams params;
    double q0;

    MeanFieldTrajectory(ModelParams p, double q0_in)
        : params(std::move(p)), q0(q0_in) {
        check_admissible();
    }

    /// Default initial condition q_0 = q*/2 (admissible for every valid model).
    explicit MeanFieldTrajectory(ModelParams p)
        : params(std::move(p)), q0(params.q_star() / 2.0) {
        check_admissible();
    }

    void check_admissible() const {
        const double qs = params.q_star();
        if (!(qs > 0.0)) {
            throw InvalidParameterError(
                "MeanFieldTrajectory: kappa+ must exceed mortality (q* <= 0)");
        }
        if (!(q0 > 0.0) || !(q0 < qs)) {
            throw InvalidParameterError(
                "MeanFieldTrajectory: q0 must lie strictly between 0 and q*");
        }
    }

    double q_star() const { return params.q_star(); }
    /// Logistic growth rate kappa+ - m.
    double growth_rate() const { return params.kappa_plus() - params.mortality; }

    /// Denominator q0 + (q* - q0) exp(-(kappa+ - m) t); q_t = q* q0 / denom.
    double denom(double t) const {
        return q0 + (q_star() - q0) * std::exp(-growth_rate() * t);
    }

    /// q_t = q* q0 / (q0 + (q* - q0) e^{-(kappa+ - m) t}).
    double q_at(double t) const { return q_star() * q0 / denom(t); }

    /// log(q_t / q_s), computed from the denominators (stable for t >> s).
    double log_q_ratio(double s, double t) const {
        return std::log(denom(s)) - std::log(denom(t));
    }

    /// integral_s^t q_tau dtau = q* (t - s) - (1/kappa-) log(q_t / q_s).
    double integral_q(double s, double t) const {
        return q_star() * (t - s) - log_q_ratio(s, t) / params.kappa_minus();
    }

    /// j(xi, t) = ahat+(xi) - q_t (ahat-(xi) + kappa-) - m, the linear
    /// coefficient of the spectral covariance equation.
    double j_hat(double t, std::span<const double> xi) const {
        return j_from_hats(t, params.a_plus.fourier(xi), params.a_minus.fourier(xi));
    }

    /// j(xi, t) from precomputed transform values (spectral-loop fast path).
    double j_from_hats(double t, double a_plus_hat, double a_minus_hat) const {
        return a_plus_hat - q_at(t) * (a_minus_hat + params.kappa_minus()) -
               params.mortality;
    }

    /// integral_s^t j(xi, tau) dtau in closed form:
    ///   -(kappa+ - Jhat*(xi)) (t - s) + ((ahat-(xi) + kappa-)/kappa-) log(q_t/q_s)
    /// where kappa+ - Jhat* = (kappa+ - ahat+) + q* ahat- enters through the
    /// cancellation-free gap of a+.
    double exponent(double s, double t, std::span<const double> xi) const {
        return exponent_from_hats(s, t, params.a_plus.fourier_gap(xi),
                                  params.a_minus.fourier(xi));
    }

    /// Closed-form integral of j from precomputed gap+(xi) and ahat-(xi).
    double exponent_from_hats(double s, double t, double a_plus_gap,
                              double a_minus_hat) const {
        const double decay = a_plus_gap + q_star() * a_minus_hat;
        return -decay * (t - s) +
               (a_minus_hat + params.kappa_minus()) / params.kappa_minus() *
                   log_q_ratio(s, t);
    }
};

} // namespace slm
