#pragma once

// Parameter types shared by the analytic and simulation code.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>

#include "agemap/numerics.hpp"

namespace agemap {

/// Geometry, propagation and access parameters of the bipolar network.
/// Validated on construction; immutable afterwards.
class NetworkParams {
public:
    /// beta is the linear SIR threshold. Throws std::invalid_argument unless
    /// lambda_sd > 0, link_distance > 0, alpha > 2, beta > 0 and 0 < xi <= 1.
    NetworkParams(double lambda_sd, double link_distance, double alpha, double beta, double xi);

    double lambda_sd() const noexcept { return lambda_sd_; }
    double link_distance() const noexcept { return link_distance_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    double xi() const noexcept { return xi_; }

    /// 2 / alpha, in (0, 1).
    double delta() const noexcept { return delta_; }
    /// Gamma(1 + delta) Gamma(1 - delta).
    double delta_hat() const noexcept { return delta_hat_; }
    /// pi lambda_sd beta^delta R^2 delta_hat, the factor multiplying C(b) in
    /// the exponent of the success-probability moments.
    double moment_scale() const noexcept;

    NetworkParams with_lambda_sd(double v) const { return {v, link_distance_, alpha_, beta_, xi_}; }
    NetworkParams with_link_distance(double v) const { return {lambda_sd_, v, alpha_, beta_, xi_}; }
    NetworkParams with_alpha(double v) const { return {lambda_sd_, link_distance_, v, beta_, xi_}; }
    NetworkParams with_beta(double v) const { return {lambda_sd_, link_distance_, alpha_, v, xi_}; }
    NetworkParams with_xi(double v) const { return {lambda_sd_, link_distance_, alpha_, beta_, v}; }

private:
    double lambda_sd_;
    double link_distance_;
    double alpha_;
    double beta_;
    double xi_;
    double delta_;
    double delta_hat_;
};

double db_to_linear(double db) noexcept;
double linear_to_db(double linear) noexcept;

/// Bernoulli update arrivals with probability lambda_a per slot.
class TrafficParams {
public:
    /// Throws std::invalid_argument unless 0 < lambda_a <= 1.
    explicit TrafficParams(double lambda_a);

    double lambda_a() const noexcept { return lambda_a_; }
    /// Mean idle wait for the next arrival, 1/lambda_a - 1 slots.
    double z_a() const noexcept { return 1.0 / lambda_a_ - 1.0; }
    /// 1 / Z_a; +infinity when lambda_a == 1.
    double lambda_a_prime() const noexcept;

private:
    double lambda_a_;
};

enum class Discipline { NonPreemptive, Preemptive };

std::string_view to_string(Discipline d) noexcept;
/// Accepts "np"/"nonpreemptive"/"non-preemptive" and "p"/"preemptive".
Discipline parse_discipline(std::string_view s);

/// Moments p_m = E[p_x^m] of the interferer activity, m >= 1.
///
/// The sequence is extended lazily and cached; copies share the cache.
/// Saturated and DominantStep sequences are checked to be nonincreasing and
/// bounded by xi^m as they are extended.
class ActivityMoments {
public:
    enum class Provenance { Saturated, DominantStep, Custom };

    using Generator = std::function<double(unsigned)>;
    /// E[g(activity)] against the activity distribution, when it is known.
    using Expectation = std::function<double(const numerics::RealFunction&)>;

    /// p_m = xi^m (every interferer transmits with probability xi).
    static ActivityMoments saturated(double xi);
    /// Moments from an arbitrary generator. Warns when the first three
    /// moments fail the Hankel-type consistency checks.
    static ActivityMoments custom(Generator gen, std::optional<Expectation> expectation = std::nullopt);
    /// Activity of a link operating in the dominant system, built by the
    /// analytic module. `xi` bounds the support.
    static ActivityMoments dominant_step(double xi, Generator gen, Expectation expectation);

    /// p_m for m >= 1.
    double moment(unsigned m) const;
    Provenance provenance() const noexcept;
    /// Upper end of the activity support (xi); 1 for Custom.
    double support_max() const noexcept;

    bool has_distribution() const noexcept;
    /// Throws std::logic_error when has_distribution() is false.
    double expect(const numerics::RealFunction& g) const;

    /// p2 >= p1^2 and p1 p3 >= p2^2.
    bool hankel_consistent() const;

private:
    struct State;
    explicit ActivityMoments(std::shared_ptr<State> s) : state_(std::move(s)) {}
    std::shared_ptr<State> state_;
};

std::string_view to_string(ActivityMoments::Provenance p) noexcept;

} // namespace agemap
