#pragma once

// Conditional (per-link) and spatial peak-AoI statistics for zero-buffer
// queues under both disciplines.

#include <functional>
#include <optional>

#include "agemap/analytic.hpp"
#include "agemap/model.hpp"
#include "agemap/numerics.hpp"

namespace agemap::paoi {

/// Per-link quantities given the conditional success probability mu.
class ConditionalPAoI {
public:
    /// Throws std::domain_error unless 0 < mu <= 1.
    ConditionalPAoI(Discipline discipline, double mu, double xi, TrafficParams traffic);

    Discipline discipline() const noexcept { return discipline_; }
    double mu() const noexcept { return mu_; }
    /// Per-slot delivery probability xi * mu.
    double service_rate() const noexcept { return xi_ * mu_; }
    /// Per-slot probability that a preemptive service episode of the latest
    /// update ends: xi mu + lambda_a (1 - xi mu).
    double q_s() const noexcept;
    /// xi mu (1 - lambda_a) + lambda_a; the same number as q_s written as a
    /// convex combination of 1 and xi mu.
    double s_a() const noexcept;

    /// Temporal mean peak AoI for this link's discipline.
    double mean() const;

private:
    Discipline discipline_;
    double mu_;
    double xi_;
    TrafficParams traffic_;
};

/// Z_a + 2 / (xi mu); +inf at mu = 0.
double mean_paoi_np(double mu, double xi, const TrafficParams& traffic);

/// Z_a + 1 / (xi mu) + 1 / q_s; +inf at mu = 0.
double mean_paoi_p(double mu, double xi, const TrafficParams& traffic);

double mean_paoi(Discipline discipline, double mu, double xi, const TrafficParams& traffic);

/// P[latest-update delivery time = m] = q_s (1 - q_s)^{m-1}, m >= 1.
double service_pmf_p(unsigned m, double mu, double xi, const TrafficParams& traffic);

/// Moment generating function of the preemptive conditional peak AoI.
/// Throws std::domain_error outside the convergence region
/// e^t < min(1/(1-lambda_a), 1/(1-xi mu), 1/(1-q_s)).
double paoi_mgf_p(double t, double mu, double xi, const TrafficParams& traffic);

enum class SnmMethod { Quadrature, Series };

/// Raised by the series path when the inner alternating sum cancels away
/// more than ten significant digits.
class SeriesInstability : public numerics::NumericsError {
public:
    using numerics::NumericsError::NumericsError;
};

using MomentFunction = std::function<double(int)>;

/// S(n; m) = E[mu^{-m} S_a^{-n}] by the double series over the moments M_l.
double s_nm_series(unsigned n, unsigned m, const MomentFunction& moments, double xi, const TrafficParams& traffic,
                   const numerics::SeriesControl& ctrl = {});

/// S(n; m) by direct quadrature of mu^{-m} (xi mu (1-lambda_a) + lambda_a)^{-n}
/// against the given law of mu.
double s_nm_quadrature(unsigned n, unsigned m, const analytic::SuccessDistribution& law, double xi,
                       const TrafficParams& traffic);

/// Inputs of the spatial PAoI bounds: moments of mu from the two-step
/// construction plus the fitted law used wherever a distribution is needed.
struct SpatialModel {
    NetworkParams params;
    TrafficParams traffic;
    analytic::SuccessMoments moments;
    analytic::SuccessDistribution law;
    numerics::SeriesControl ctrl{};
    SnmMethod snm_method = SnmMethod::Quadrature;

    /// Two-step (p_m = p_m^D) model; the tighter bound.
    static SpatialModel two_step(const NetworkParams& params, const TrafficParams& traffic,
                                 const numerics::SeriesControl& ctrl = {});
    /// Step-1 dominant-system (p_m = xi^m) model.
    static SpatialModel step_one(const NetworkParams& params, const TrafficParams& traffic,
                                 const numerics::SeriesControl& ctrl = {});
    static SpatialModel from_analysis(const analytic::TwoStepAnalysis& analysis, const TrafficParams& traffic,
                                      bool use_step2 = true);
};

/// S(n; m) for the spatial model. n = 0 returns M_{-m} from the moments (the
/// bound-preserving route). n >= 1 uses the configured method; the series
/// falls back to quadrature when unstable; quadrature switches to
/// s_nm_recursive when the law makes E[mu^{-m}] diverge.
double s_nm(unsigned n, unsigned m, const SpatialModel& model);

/// S(n; m) from S(n-1; m) and S(n; m-1) via 1 = (S_a - xi (1-lambda_a) mu) / lambda_a,
/// down to the moments M_{-m} and the bounded integrals S(n; 0). Needs only
/// finitely many inverse moments of mu, so it stays usable when the fitted
/// beta law has kappa1 <= m.
double s_nm_recursive(unsigned n, unsigned m, const SpatialModel& model);

/// sum_n (b choose n) Z_a^{b-n} (2/xi)^n M_{-n} for given inverse moments M(-n).
double moment_paoi_np(unsigned b, double z_a, double xi, const MomentFunction& moments);

/// Upper bound on the b-th spatial moment of the conditional mean PAoI.
double moment_paoi(unsigned b, Discipline discipline, const SpatialModel& model);

struct PAoIMoments {
    enum class Provenance { AnalyticBound, Simulated };

    Discipline discipline;
    double p1;
    double p2;
    Provenance provenance = Provenance::AnalyticBound;

    double variance() const noexcept { return p2 - p1 * p1; }
    double std_dev() const noexcept;
};

/// P1 and P2 via the closed forms for b = 1, 2.
PAoIMoments paoi_moments(Discipline discipline, const SpatialModel& model);

/// Closed-form first moment: NP  Z_a + 2 M_{-1} / xi;  P  Z_a + M_{-1} / xi + S(1;0).
double p1_closed_form(Discipline discipline, const SpatialModel& model);
/// Closed-form second moment.
double p2_closed_form(Discipline discipline, const SpatialModel& model);
/// 4 xi^{-2} (M_{-2} - M_{-1}^2), the non-preemptive variance bound.
double variance_np_closed_form(const SpatialModel& model);
double variance_np_closed_form(double xi, double m_minus1, double m_minus2);

/// P[conditional mean PAoI <= x] under the fitted law of mu.
///
/// Both disciplines invert the (decreasing) mean-PAoI map: F(x) = P[mu >= mu*]
/// where mean_paoi(mu*) = x. Non-preemptive inverts in closed form with the
/// argument clamped to [0, 1]; preemptive bisects on [1e-12, 1].
double cdf_mean_paoi(double x, Discipline discipline, const analytic::SuccessDistribution& law, double xi,
                     const TrafficParams& traffic);
double cdf_mean_paoi(double x, Discipline discipline, const analytic::BetaApprox& ba, double xi,
                     const TrafficParams& traffic);

} // namespace agemap::paoi
