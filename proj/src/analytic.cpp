#include "agemap/analytic.hpp"

#include "agemap/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

namespace agemap::analytic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

} // namespace

double BetaApprox::second_moment() const noexcept {
    const double s = kappa1 + kappa2;
    return kappa1 * (kappa1 + 1.0) / (s * (s + 1.0));
}

double BetaApprox::moment(double l) const {
    if (!(kappa1 + l > 0.0)) return kInf;
    return std::exp(log_beta(kappa1 + l, kappa2) - log_beta(kappa1, kappa2));
}

SuccessDistribution SuccessDistribution::point_mass(double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw std::domain_error("point mass must lie in [0, 1]");
    return SuccessDistribution(PointMass{value});
}

const BetaApprox& SuccessDistribution::beta() const {
    if (const auto* b = std::get_if<BetaApprox>(&form_)) return *b;
    throw std::logic_error("SuccessDistribution: degenerate law has no beta parameters");
}

double SuccessDistribution::point() const {
    if (const auto* p = std::get_if<PointMass>(&form_)) return p->value;
    return std::get<BetaApprox>(form_).mean();
}

double SuccessDistribution::cdf(double x) const {
    if (const auto* b = std::get_if<BetaApprox>(&form_)) return b->cdf(std::clamp(x, 0.0, 1.0));
    return x >= std::get<PointMass>(form_).value ? 1.0 : 0.0;
}

double SuccessDistribution::expect(const numerics::RealFunction& g, double shift, double tol) const {
    if (const auto* b = std::get_if<BetaApprox>(&form_))
        return shift == 0.0 ? numerics::beta_expectation(g, b->kappa1, b->kappa2, tol)
                            : numerics::beta_expectation_shifted(g, b->kappa1, b->kappa2, shift, tol);
    const double v = std::get<PointMass>(form_).value;
    return std::pow(v, shift) * g(v);
}

double c_coefficient_series(int b, const ActivityMoments& acts, double delta,
                            const numerics::SeriesControl& ctrl) {
    if (b == 0) return 0.0;
    const double bb = static_cast<double>(b);
    if (b > 0) {
        double sum = 0.0;
        double abs_sum = 0.0;
        double binom_b = 1.0;      // (b choose m)
        double binom_delta = 1.0;  // (delta-1 choose m-1)
        for (int m = 1; m <= b; ++m) {
            binom_b *= (bb - m + 1.0) / m;
            if (m > 1) binom_delta *= (delta - 1.0 - (m - 2.0)) / (m - 1.0);
            const double t = binom_b * binom_delta * acts.moment(static_cast<unsigned>(m));
            sum += t;
            abs_sum += std::abs(t);
        }
        if (!(abs_sum <= 1e8 * std::abs(sum)))
            throw numerics::NumericsError("c_coefficient_series: cancellation in the finite sum for b=" +
                                          std::to_string(b));
        return sum;
    }
    // Sequential recurrences for both binomials; sum_series visits indices in order.
    double binom_b = 1.0;
    double binom_delta = 1.0;
    std::size_t next = 1;
    auto term = [&](std::size_t idx) {
        const double m = static_cast<double>(idx);
        if (idx != next) throw std::logic_error("c_coefficient_series: out-of-order term");
        ++next;
        binom_b *= (bb - m + 1.0) / m;
        if (idx > 1) binom_delta *= (delta - 1.0 - (m - 2.0)) / (m - 1.0);
        return binom_b * binom_delta * acts.moment(static_cast<unsigned>(idx));
    };
    return numerics::sum_series(term, ctrl, 1);
}

double c_coefficient_closed_form(int b, const ActivityMoments& acts, double delta) {
    if (b != -1 && b != -2) throw std::invalid_argument("closed form exists only for b = -1, -2");
    auto e1 = acts.expect([delta](double z) {
        if (z >= 1.0) return kInf;
        return z * std::pow(1.0 - z, delta - 1.0);
    });
    if (b == -1) return -e1;
    auto e2 = acts.expect([delta](double z) {
        if (z >= 1.0) return kInf;
        return z * std::pow(1.0 - z, delta - 2.0);
    });
    return (delta - 1.0) * e2 - (delta + 1.0) * e1;
}

double c_coefficient(int b, const ActivityMoments& acts, double delta, const numerics::SeriesControl& ctrl) {
    if ((b == -1 || b == -2) && acts.has_distribution()) return c_coefficient_closed_form(b, acts, delta);
    return c_coefficient_series(b, acts, delta, ctrl);
}

double moment_success(int b, const NetworkParams& params, const ActivityMoments& acts,
                      const numerics::SeriesControl& ctrl) {
    if (b == 0) return 1.0;
    const double c = c_coefficient(b, acts, params.delta(), ctrl);
    const double exponent = -params.moment_scale() * c;
    if (std::isnan(exponent)) return kInf;
    return std::exp(exponent);
}

BetaApprox fit_beta(double m1, double m2) {
    if (!(m1 > 0.0 && m1 < 1.0 && m2 > m1 * m1 && m2 < m1))
        throw InvalidMoments("fit_beta: requires 0 < M1^2 < M2 < M1 < 1 (got M1=" + std::to_string(m1) +
                             ", M2=" + std::to_string(m2) + ")");
    const double kappa2 = (m1 - m2) * (1.0 - m1) / (m2 - m1 * m1);
    const double kappa1 = m1 * kappa2 / (1.0 - m1);
    return {kappa1, kappa2, m1, m2};
}

SuccessDistribution fit_success_distribution(double m1, double m2) {
    try {
        const auto b = fit_beta(m1, m2);
        // Relative variance below 1e-8 is within rounding of M2 - M1^2; a
        // shape parameter below 1e-6 puts all but a negligible mass at an end.
        if (b.kappa1 + b.kappa2 < 1e8 && std::min(b.kappa1, b.kappa2) > 1e-6) return SuccessDistribution(b);
    } catch (const InvalidMoments&) {
    }
    log::warn("beta fit degenerate (M1=" + std::to_string(m1) + ", M2=" + std::to_string(m2) +
              "), using a point mass at M1");
    return SuccessDistribution::point_mass(std::clamp(m1, 0.0, 1.0));
}

double meta_distribution(double x, const BetaApprox& ba) {
    if (x <= 0.0) return 1.0;
    if (x >= 1.0) return 0.0;
    return 1.0 - ba.cdf(x);
}

struct SuccessMoments::Cache {
    std::mutex mutex;
    std::map<int, double> values;
};

SuccessMoments::SuccessMoments(NetworkParams params, ActivityMoments acts, numerics::SeriesControl ctrl)
    : params_(params), acts_(std::move(acts)), ctrl_(ctrl), cache_(std::make_shared<Cache>()) {
    ctrl_.validate();
}

double SuccessMoments::at(int b) const {
    {
        std::lock_guard lock(cache_->mutex);
        if (auto it = cache_->values.find(b); it != cache_->values.end()) return it->second;
    }
    // Computed outside the lock: activity moments may themselves be expensive.
    const double v = moment_success(b, params_, acts_, ctrl_);
    std::lock_guard lock(cache_->mutex);
    cache_->values.emplace(b, v);
    return v;
}

bool SuccessMoments::invariants_hold(double tol) const {
    const double m1 = at(1), m2 = at(2), mm1 = at(-1), mm2 = at(-2);
    return at(0) == 1.0 && m1 <= 1.0 + tol && m2 <= m1 * (1.0 + tol) && m2 > 0.0 && mm1 >= 1.0 - tol &&
           mm2 >= mm1 * mm1 * (1.0 - tol);
}

namespace {

// Dominant-system activity as a function of mu: xi pi_1 with pi_1 = l'/(l' + xi mu).
double activity_of(double mu, double xi, double lp) { return xi * lp / (lp + xi * mu); }

} // namespace

double activity_cdf_dominant(double t, const NetworkParams& params, const TrafficParams& traffic,
                             const SuccessDistribution& step1) {
    const double xi = params.xi();
    if (!(t > 0.0 && t <= xi)) throw std::domain_error("activity_cdf_dominant: requires 0 < t <= xi");
    const double lp = traffic.lambda_a_prime();
    if (std::isinf(lp)) return t >= xi ? 1.0 : 0.0;
    const double u = std::clamp(lp * (1.0 / t - 1.0 / xi), 0.0, 1.0);
    // P[zeta <= t] = P[mu >= u]
    return 1.0 - step1.cdf(u);
}

double activity_cdf_dominant(double t, const NetworkParams& params, const TrafficParams& traffic,
                             const BetaApprox& step1) {
    return activity_cdf_dominant(t, params, traffic, SuccessDistribution(step1));
}

double activity_moment_dominant(unsigned m, const NetworkParams& params, const TrafficParams& traffic,
                                const SuccessDistribution& step1, double tol) {
    if (m == 0) return 1.0;
    const double xi = params.xi();
    const double md = static_cast<double>(m);
    const double lp = traffic.lambda_a_prime();
    if (std::isinf(lp)) return std::pow(xi, md);
    if (!step1.is_beta()) return std::pow(activity_of(step1.point(), xi, lp), md);

    // Below t_min the clamped beta argument is 1 and P[zeta > t] = 1, which
    // integrates to t_min^m in closed form.
    const double t_min = activity_of(1.0, xi, lp);
    const auto& ba = step1.beta();
    auto integrand = [&](double t) {
        const double u = std::clamp(lp * (1.0 / t - 1.0 / xi), 0.0, 1.0);
        return md * std::pow(t, md - 1.0) * numerics::reg_inc_beta(u, ba.kappa1, ba.kappa2);
    };
    const double head = std::pow(t_min, md);
    if (!(t_min < xi)) return head;
    return head + numerics::integrate(integrand, t_min, xi, tol, tol * head);
}

double activity_moment_dominant(unsigned m, const NetworkParams& params, const TrafficParams& traffic,
                                const BetaApprox& step1, double tol) {
    return activity_moment_dominant(m, params, traffic, SuccessDistribution(step1), tol);
}

ActivityMoments dominant_activity(const NetworkParams& params, const TrafficParams& traffic,
                                  const SuccessDistribution& step1) {
    const double xi = params.xi();
    const double lp = traffic.lambda_a_prime();
    if (std::isinf(lp)) {
        return ActivityMoments::dominant_step(
            xi, [xi](unsigned m) { return std::pow(xi, static_cast<double>(m)); },
            [xi](const numerics::RealFunction& g) { return g(xi); });
    }
    auto gen = [params, traffic, step1](unsigned m) {
        return activity_moment_dominant(m, params, traffic, step1);
    };
    auto expectation = [xi, lp, step1](const numerics::RealFunction& g) {
        return step1.expect([&](double mu) { return g(activity_of(mu, xi, lp)); });
    };
    return ActivityMoments::dominant_step(xi, gen, expectation);
}

TwoStepAnalysis analyze_two_step(const NetworkParams& params, const TrafficParams& traffic,
                                 const numerics::SeriesControl& ctrl) {
    SuccessMoments step1(params, ActivityMoments::saturated(params.xi()), ctrl);
    SuccessDistribution fit1 = fit_success_distribution(step1(1), step1(2));
    ActivityMoments dominant = dominant_activity(params, traffic, fit1);
    SuccessMoments step2(params, dominant, ctrl);
    SuccessDistribution fit2 = fit_success_distribution(step2(1), step2(2));
    return {step1, fit1, dominant, step2, fit2};
}

SuccessMoments two_step_moments(const std::set<int>& b_list, const NetworkParams& params,
                                const TrafficParams& traffic, const numerics::SeriesControl& ctrl) {
    auto analysis = analyze_two_step(params, traffic, ctrl);
    for (int b : b_list) (void)analysis.step2(b);
    return analysis.step2;
}

double conditional_success_probability(std::span<const double> distances, std::span<const double> activities,
                                       const NetworkParams& params) {
    if (distances.size() != activities.size())
        throw std::invalid_argument("conditional_success_probability: size mismatch");
    const double alpha = params.alpha();
    const double scale = params.beta() * std::pow(params.link_distance(), alpha);
    double prod = 1.0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        const double ra = std::pow(distances[i], alpha);
        const double clear = ra / (ra + scale);  // fading does not push SIR below beta
        prod *= (1.0 - activities[i]) + activities[i] * clear;
    }
    return prod;
}

} // namespace agemap::analytic
