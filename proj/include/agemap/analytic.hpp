#pragma once

// Moments of the conditional success probability, the beta approximation of
// its spatial distribution, and the two-step dominant-system construction.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <variant>

#include "agemap/model.hpp"
#include "agemap/numerics.hpp"

namespace agemap::analytic {

/// Raised by fit_beta when (M1, M2) is not the moment pair of a
/// nondegenerate [0, 1] random variable.
class InvalidMoments : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Beta(kappa1, kappa2) matched to the first two moments of mu.
struct BetaApprox {
    double kappa1;
    double kappa2;
    double m1;
    double m2;

    double mean() const noexcept { return kappa1 / (kappa1 + kappa2); }
    double second_moment() const noexcept;
    /// E[mu^l] of the beta law (l may be negative); +inf when kappa1 + l <= 0.
    double moment(double l) const;
    double cdf(double x) const { return numerics::reg_inc_beta(x, kappa1, kappa2); }
};

/// Spatial law of mu used downstream: the fitted beta, or a point mass when
/// the moments are degenerate (e.g. no interference at all).
class SuccessDistribution {
public:
    explicit SuccessDistribution(BetaApprox beta) : form_(beta) {}
    static SuccessDistribution point_mass(double value);

    bool is_beta() const noexcept { return std::holds_alternative<BetaApprox>(form_); }
    /// Throws std::logic_error for a point mass.
    const BetaApprox& beta() const;
    double point() const;

    /// P[mu <= x].
    double cdf(double x) const;
    /// P[mu > x]; the meta distribution.
    double ccdf(double x) const { return 1.0 - cdf(x); }
    /// E[mu^shift g(mu)].
    double expect(const numerics::RealFunction& g, double shift = 0.0, double tol = 1e-12) const;

private:
    struct PointMass {
        double value;
    };
    explicit SuccessDistribution(PointMass p) : form_(p) {}
    std::variant<BetaApprox, PointMass> form_;
};

/// C(b) = sum_{m>=1} (b choose m)(delta-1 choose m-1) p_m.
///
/// b > 0 is a finite sum. For b = -1, -2 with a known activity distribution
/// the closed forms
///   C(-1) = -E[z (1-z)^{delta-1}]
///   C(-2) = (delta-1) E[z (1-z)^{delta-2}] - (delta+1) E[z (1-z)^{delta-1}]
/// are used; other negative b go through the truncated series.
double c_coefficient(int b, const ActivityMoments& acts, double delta,
                     const numerics::SeriesControl& ctrl = {});

/// Always the series (negative b) or finite sum (b >= 0).
double c_coefficient_series(int b, const ActivityMoments& acts, double delta,
                            const numerics::SeriesControl& ctrl = {});

/// The closed forms for b in {-1, -2}. Requires acts.has_distribution().
double c_coefficient_closed_form(int b, const ActivityMoments& acts, double delta);

/// M_b = exp(-pi lambda_sd beta^delta R^2 delta_hat C(b)). May be +inf for
/// negative b when the activity reaches 1.
double moment_success(int b, const NetworkParams& params, const ActivityMoments& acts,
                      const numerics::SeriesControl& ctrl = {});

/// Method-of-moments beta fit. Throws InvalidMoments unless 0 < M1^2 < M2 < M1 < 1.
BetaApprox fit_beta(double m1, double m2);

/// Beta fit when valid and not numerically degenerate (kappa1 + kappa2 < 1e8,
/// both shapes above 1e-6); otherwise a point mass at M1, with a warning.
SuccessDistribution fit_success_distribution(double m1, double m2);

/// P[mu > x] under the beta approximation.
double meta_distribution(double x, const BetaApprox& ba);

/// Moments M_b for one activity model, computed on demand and cached.
/// Copies share the cache; safe for concurrent use.
class SuccessMoments {
public:
    SuccessMoments(NetworkParams params, ActivityMoments acts, numerics::SeriesControl ctrl = {});

    double operator()(int b) const { return at(b); }
    double at(int b) const;

    const NetworkParams& params() const noexcept { return params_; }
    const ActivityMoments& activity() const noexcept { return acts_; }
    const numerics::SeriesControl& control() const noexcept { return ctrl_; }

    /// M_0 = 1, 1 >= M_1 >= M_2 > 0, M_{-1} >= 1, M_{-2} >= M_{-1}^2.
    bool invariants_hold(double tol = 1e-12) const;

private:
    NetworkParams params_;
    ActivityMoments acts_;
    numerics::SeriesControl ctrl_;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

/// P[zeta <= t] for the activity of a link in the dominant system, with the
/// incomplete-beta argument lambda'_a (1/t - 1/xi) clamped to [0, 1].
/// Throws std::domain_error unless 0 < t <= xi.
double activity_cdf_dominant(double t, const NetworkParams& params, const TrafficParams& traffic,
                             const SuccessDistribution& step1);
double activity_cdf_dominant(double t, const NetworkParams& params, const TrafficParams& traffic,
                             const BetaApprox& step1);

/// p_m^D = m int_0^xi t^{m-1} P[zeta > t] dt.
double activity_moment_dominant(unsigned m, const NetworkParams& params, const TrafficParams& traffic,
                                const SuccessDistribution& step1, double tol = 1e-12);
double activity_moment_dominant(unsigned m, const NetworkParams& params, const TrafficParams& traffic,
                                const BetaApprox& step1, double tol = 1e-12);

/// Activity of a dominant-system link as an ActivityMoments value (moments via
/// activity_moment_dominant, expectations via the law of mu pushed through
/// zeta = xi lambda'_a / (lambda'_a + xi mu)).
ActivityMoments dominant_activity(const NetworkParams& params, const TrafficParams& traffic,
                                  const SuccessDistribution& step1);

/// Everything produced by the two-step procedure.
struct TwoStepAnalysis {
    SuccessMoments step1;            // p_m = xi^m
    SuccessDistribution step1_fit;   // law of mu in the dominant system
    ActivityMoments dominant;        // p_m^D
    SuccessMoments step2;            // p_m = p_m^D; bounds for the original network
    SuccessDistribution step2_fit;
};

TwoStepAnalysis analyze_two_step(const NetworkParams& params, const TrafficParams& traffic,
                                 const numerics::SeriesControl& ctrl = {});

/// Step-2 moments with every b in `b_list` evaluated eagerly.
SuccessMoments two_step_moments(const std::set<int>& b_list, const NetworkParams& params,
                                const TrafficParams& traffic, const numerics::SeriesControl& ctrl = {});

/// Conditional success probability of one receiver given its interferer
/// distances and activities: prod_x [1 - p_x / (1 + beta^{-1} R^{-alpha} r_x^{alpha})].
double conditional_success_probability(std::span<const double> distances, std::span<const double> activities,
                                       const NetworkParams& params);

} // namespace agemap::analytic
