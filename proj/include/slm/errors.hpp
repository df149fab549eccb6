/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by all library modules.
 *
 * Every failure the library can signal derives from slm::Error so that
 * callers (notably the CLI) can map the whole hierarchy onto exit codes.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace slm {

/// Base class of all library exceptions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A constructor or operation argument is outside its documented domain.
class InvalidParameterError : public Error {
public:
    using Error::Error;
};

/// A kernel object violates a structural requirement (negativity, symmetry of
/// moments, non-positive-definite second-moment matrix, ...).
class InvalidKernelError : public Error {
public:
    using Error::Error;
};

/// A model assumption that an operation relies on does not hold numerically
/// (asymmetric sample, non-positive spectral gap, ...).
class AssumptionViolationError : public Error {
public:
    using Error::Error;
};

/// A quadrature integrand returned NaN or infinity; carries the radius (or
/// point norm) at which the failure was observed.
class IntegrandFailureError : public Error {
public:
    IntegrandFailureError(const std::string &msg, double radius)
        : Error(msg), radius_(radius) {}
    double radius() const { return radius_; }

private:
    double radius_;
};

/// Time integration produced a non-finite state; carries the time stamp.
class IntegrationFailureError : public Error {
public:
    IntegrationFailureError(const std::string &msg, double t) : Error(msg), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Root bracketing failed; carries the objective values at both bracket ends.
class NoRootError : public Error {
public:
    NoRootError(const std::string &msg, double h_lo, double h_hi)
        : Error(msg), h_lo_(h_lo), h_hi_(h_hi) {}
    double h_lo() const { return h_lo_; }
    double h_hi() const { return h_hi_; }

private:
    double h_lo_;
    double h_hi_;
};

/// A root-solver iterate left the admissible region (used to shrink brackets).
class BracketViolationError : public Error {
public:
    using Error::Error;
};

/// A requested evaluation point exceeds the resolution of the available grid.
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// A run configuration failed to parse or validate.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace slm
