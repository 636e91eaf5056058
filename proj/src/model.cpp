#include "agemap/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "agemap/log.hpp"

namespace agemap {

NetworkParams::NetworkParams(double lambda_sd, double link_distance, double alpha, double beta, double xi)
    : lambda_sd_(lambda_sd), link_distance_(link_distance), alpha_(alpha), beta_(beta), xi_(xi) {
    if (!(lambda_sd > 0.0) || !std::isfinite(lambda_sd))
        throw std::invalid_argument("NetworkParams: lambda_sd must be positive");
    if (!(link_distance > 0.0) || !std::isfinite(link_distance))
        throw std::invalid_argument("NetworkParams: link distance must be positive");
    if (!(alpha > 2.0) || !std::isfinite(alpha))
        throw std::invalid_argument("NetworkParams: path-loss exponent must exceed 2");
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("NetworkParams: SIR threshold must be positive");
    if (!(xi > 0.0 && xi <= 1.0))
        throw std::invalid_argument("NetworkParams: access probability must lie in (0, 1]");
    delta_ = 2.0 / alpha;
    delta_hat_ = std::tgamma(1.0 + delta_) * std::tgamma(1.0 - delta_);
}

double NetworkParams::moment_scale() const noexcept {
    return std::numbers::pi * lambda_sd_ * std::pow(beta_, delta_) * link_distance_ * link_distance_ *
           delta_hat_;
}

double db_to_linear(double db) noexcept { return std::pow(10.0, db / 10.0); }
double linear_to_db(double linear) noexcept { return 10.0 * std::log10(linear); }

TrafficParams::TrafficParams(double lambda_a) : lambda_a_(lambda_a) {
    if (!(lambda_a > 0.0 && lambda_a <= 1.0))
        throw std::invalid_argument("TrafficParams: arrival probability must lie in (0, 1]");
}

double TrafficParams::lambda_a_prime() const noexcept {
    if (lambda_a_ >= 1.0) return std::numeric_limits<double>::infinity();
    return lambda_a_ / (1.0 - lambda_a_);
}

std::string_view to_string(Discipline d) noexcept {
    return d == Discipline::NonPreemptive ? "np" : "p";
}

Discipline parse_discipline(std::string_view s) {
    if (s == "np" || s == "nonpreemptive" || s == "non-preemptive" || s == "NP") return Discipline::NonPreemptive;
    if (s == "p" || s == "preemptive" || s == "P") return Discipline::Preemptive;
    throw std::invalid_argument("unknown discipline: " + std::string(s));
}

std::string_view to_string(ActivityMoments::Provenance p) noexcept {
    switch (p) {
    case ActivityMoments::Provenance::Saturated: return "saturated";
    case ActivityMoments::Provenance::DominantStep: return "dominant-step";
    case ActivityMoments::Provenance::Custom: return "custom";
    }
    return "?";
}

struct ActivityMoments::State {
    Provenance provenance;
    double xi;
    Generator gen;
    std::optional<Expectation> expectation;
    mutable std::mutex mutex;
    mutable std::vector<double> cache;  // cache[m-1] = p_m
};

ActivityMoments ActivityMoments::saturated(double xi) {
    if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("ActivityMoments: xi must lie in (0, 1]");
    auto s = std::make_shared<State>();
    s->provenance = Provenance::Saturated;
    s->xi = xi;
    s->gen = [xi](unsigned m) { return std::pow(xi, static_cast<double>(m)); };
    s->expectation = [xi](const numerics::RealFunction& g) { return g(xi); };
    return ActivityMoments(std::move(s));
}

ActivityMoments ActivityMoments::custom(Generator gen, std::optional<Expectation> expectation) {
    auto s = std::make_shared<State>();
    s->provenance = Provenance::Custom;
    s->xi = 1.0;
    s->gen = std::move(gen);
    s->expectation = std::move(expectation);
    ActivityMoments acts(std::move(s));
    if (!acts.hankel_consistent())
        log::warn("custom activity moments fail the Hankel consistency check (p2 >= p1^2, p1 p3 >= p2^2)");
    return acts;
}

ActivityMoments ActivityMoments::dominant_step(double xi, Generator gen, Expectation expectation) {
    if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("ActivityMoments: xi must lie in (0, 1]");
    auto s = std::make_shared<State>();
    s->provenance = Provenance::DominantStep;
    s->xi = xi;
    s->gen = std::move(gen);
    s->expectation = std::move(expectation);
    return ActivityMoments(std::move(s));
}

double ActivityMoments::moment(unsigned m) const {
    if (m == 0) return 1.0;
    std::lock_guard lock(state_->mutex);
    auto& cache = state_->cache;
    while (cache.size() < m) {
        const auto next = static_cast<unsigned>(cache.size() + 1);
        double v = state_->gen(next);
        if (state_->provenance != Provenance::Custom) {
            const double bound = std::pow(state_->xi, static_cast<double>(next));
            const double prev = cache.empty() ? 1.0 : cache.back();
            // Quadrature noise may overshoot the exact bounds by a few ulps.
            const double slack = 1e-9 * bound + 1e-300;
            if (v > bound + slack || v > prev + 1e-9 * prev + 1e-300 || v < 0.0)
                throw std::logic_error("ActivityMoments: moment sequence violates 0 <= p_m <= min(p_{m-1}, xi^m)");
            v = std::min({v, bound, prev});
        }
        cache.push_back(v);
    }
    return cache[m - 1];
}

ActivityMoments::Provenance ActivityMoments::provenance() const noexcept { return state_->provenance; }

double ActivityMoments::support_max() const noexcept { return state_->xi; }

bool ActivityMoments::has_distribution() const noexcept { return state_->expectation.has_value(); }

double ActivityMoments::expect(const numerics::RealFunction& g) const {
    if (!state_->expectation) throw std::logic_error("ActivityMoments: activity distribution unknown");
    return (*state_->expectation)(g);
}

bool ActivityMoments::hankel_consistent() const {
    const double p1 = moment(1);
    const double p2 = moment(2);
    const double p3 = moment(3);
    constexpr double tol = 1e-12;
    return p2 >= p1 * p1 - tol && p1 * p3 >= p2 * p2 - tol;
}

} // namespace agemap
