#pragma once

// Special functions and numerical kernels used by the analytic modules.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace agemap::numerics {

/// Base class for numerical failures.
class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an iterative method runs out of budget. Carries the best
/// estimate reached so callers can decide whether it is usable.
class ConvergenceError : public NumericsError {
public:
    ConvergenceError(const std::string& what, double best_estimate, double error_indicator)
        : NumericsError(what), best_estimate_(best_estimate), error_indicator_(error_indicator) {}

    double best_estimate() const noexcept { return best_estimate_; }
    /// Last term magnitude (series) or estimated absolute error (quadrature).
    double error_indicator() const noexcept { return error_indicator_; }

private:
    double best_estimate_;
    double error_indicator_;
};

/// Raised by find_root_decreasing when the bracket shows no sign change.
class NoRootError : public NumericsError {
public:
    NoRootError(const std::string& what, bool above) : NumericsError(what), above_(above) {}
    /// True when f > 0 on the whole bracket, false when f < 0 on it.
    bool function_positive() const noexcept { return above_; }

private:
    bool above_;
};

struct SeriesControl {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    std::size_t max_terms = 10'000;

    /// Throws std::invalid_argument on nonpositive tolerances or zero budget.
    void validate() const;
};

using RealFunction = std::function<double(double)>;
using TermFunction = std::function<double(std::size_t)>;

/// Generalized binomial coefficient (x choose k) = prod_{i=1..k} (x - i + 1) / i.
double gen_binomial(double x, unsigned k) noexcept;

/// Regularized incomplete beta I_x(a, b). Continued fraction (modified Lentz)
/// evaluated on whichever side of the mean converges fastest.
double reg_inc_beta(double x, double a, double b);

/// Density of Beta(a, b) at x.
double beta_pdf(double x, double a, double b);

/// Global adaptive Gauss-Kronrod (10/21) quadrature on [lo, hi].
///
/// Subintervals with the largest error estimate are bisected first, so an
/// integrable endpoint singularity gets a geometrically refined panel sequence
/// toward the endpoint. The integrand is never evaluated at lo or hi.
/// Throws ConvergenceError once `max_intervals` are used without meeting
/// max(abs_tol, tol * |result|).
double integrate(const RealFunction& f, double lo, double hi, double tol,
                 double abs_tol = 1e-300, std::size_t max_intervals = 4000);

/// E[g(X)] for X ~ Beta(a, b).
///
/// The density's endpoint powers are absorbed by the substitutions
/// x = v^{1/a} on [0, 1/2] and 1 - x = w^{1/b} on [1/2, 1], which leaves a
/// bounded integrand whenever g is bounded. Exponents a <= 0 give +infinity.
double beta_expectation(const RealFunction& g, double a, double b, double tol = 1e-12);

/// Like beta_expectation but for g(x) * x^{shift}: computes
/// E[X^{shift} g(X)] = B(a + shift, b) / B(a, b) * E_{Beta(a+shift,b)}[g].
/// Returns +infinity when a + shift <= 0.
double beta_expectation_shifted(const RealFunction& g, double a, double b, double shift,
                                double tol = 1e-12);

/// Sum of term(first), term(first + 1), ...
///
/// Stops after two consecutive terms with |term| < max(abs_tol, rel_tol * |sum|);
/// two are required because alternating series can hit a small term early.
double sum_series(const TermFunction& term, const SeriesControl& ctrl, std::size_t first = 0);

/// Bisection for the zero of a strictly decreasing f on [lo, hi].
///
/// Requires f(lo) >= 0 >= f(hi); otherwise throws NoRootError. Returns the
/// bracket midpoint once the bracket is narrower than tol.
double find_root_decreasing(const RealFunction& f, double lo, double hi, double tol);

} // namespace agemap::numerics
