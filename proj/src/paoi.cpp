#include "agemap/paoi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "agemap/log.hpp"

namespace agemap::paoi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double q_s_of(double service_rate, double lambda_a) {
    return service_rate + lambda_a * (1.0 - service_rate);
}

double multinomial(unsigned b, unsigned l, unsigned m, unsigned n) {
    return std::exp(std::lgamma(b + 1.0) - std::lgamma(l + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n + 1.0));
}

double binomial(unsigned n, unsigned k) { return numerics::gen_binomial(static_cast<double>(n), k); }

} // namespace

ConditionalPAoI::ConditionalPAoI(Discipline discipline, double mu, double xi, TrafficParams traffic)
    : discipline_(discipline), mu_(mu), xi_(xi), traffic_(traffic) {
    if (!(mu > 0.0 && mu <= 1.0)) throw std::domain_error("ConditionalPAoI: mu must lie in (0, 1]");
    if (!(xi > 0.0 && xi <= 1.0)) throw std::domain_error("ConditionalPAoI: xi must lie in (0, 1]");
}

double ConditionalPAoI::q_s() const noexcept { return q_s_of(service_rate(), traffic_.lambda_a()); }

double ConditionalPAoI::s_a() const noexcept {
    return service_rate() * (1.0 - traffic_.lambda_a()) + traffic_.lambda_a();
}

double ConditionalPAoI::mean() const { return mean_paoi(discipline_, mu_, xi_, traffic_); }

double mean_paoi_np(double mu, double xi, const TrafficParams& traffic) {
    if (mu <= 0.0) return kInf;
    return traffic.z_a() + 2.0 / (xi * mu);
}

double mean_paoi_p(double mu, double xi, const TrafficParams& traffic) {
    if (mu <= 0.0) return kInf;
    const double rate = xi * mu;
    return traffic.z_a() + 1.0 / rate + 1.0 / q_s_of(rate, traffic.lambda_a());
}

double mean_paoi(Discipline discipline, double mu, double xi, const TrafficParams& traffic) {
    return discipline == Discipline::NonPreemptive ? mean_paoi_np(mu, xi, traffic) : mean_paoi_p(mu, xi, traffic);
}

double service_pmf_p(unsigned m, double mu, double xi, const TrafficParams& traffic) {
    if (m == 0) return 0.0;
    const double q = q_s_of(xi * mu, traffic.lambda_a());
    return q * std::pow(1.0 - q, static_cast<double>(m) - 1.0);
}

double paoi_mgf_p(double t, double mu, double xi, const TrafficParams& traffic) {
    const double la = traffic.lambda_a();
    const double rate = xi * mu;
    const double q = q_s_of(rate, la);
    const double et = std::exp(t);
    const double d1 = 1.0 - (1.0 - la) * et;
    const double d2 = 1.0 - (1.0 - rate) * et;
    const double d3 = 1.0 - (1.0 - q) * et;
    if (!(d1 > 0.0 && d2 > 0.0 && d3 > 0.0))
        throw std::domain_error("paoi_mgf_p: t outside the region of convergence");
    return la * rate * q * et * et / (d1 * d2 * d3);
}

double s_nm_series(unsigned n, unsigned m, const MomentFunction& moments, double xi, const TrafficParams& traffic,
                   const numerics::SeriesControl& ctrl) {
    const double one_minus_la = 1.0 - traffic.lambda_a();
    const int shift = -static_cast<int>(m);
    auto term = [&](std::size_t k) -> double {
        const double outer = numerics::gen_binomial(static_cast<double>(n) + k - 1.0, static_cast<unsigned>(k));
        if (outer == 0.0) return 0.0;
        const double weight = outer * std::pow(one_minus_la, static_cast<double>(k));
        if (weight == 0.0) return 0.0;
        double inner = 0.0;
        double largest = 0.0;
        double c = 1.0;  // (k choose l) xi^l
        for (std::size_t l = 0; l <= k; ++l) {
            if (l > 0) c *= xi * static_cast<double>(k - l + 1) / static_cast<double>(l);
            const double piece = c * moments(static_cast<int>(l) + shift);
            largest = std::max(largest, std::abs(piece));
            inner += (l % 2 == 0) ? piece : -piece;
        }
        if (!std::isfinite(inner) || largest > 1e10 * std::abs(inner))
            throw SeriesInstability("s_nm_series: inner alternating sum lost more than 10 digits at k=" +
                                    std::to_string(k));
        return weight * inner;
    };
    if (n == 0) return moments(shift);
    return numerics::sum_series(term, ctrl, 0);
}

double s_nm_quadrature(unsigned n, unsigned m, const analytic::SuccessDistribution& law, double xi,
                       const TrafficParams& traffic) {
    const double la = traffic.lambda_a();
    const double nn = static_cast<double>(n);
    return law.expect([=](double mu) { return std::pow(xi * mu * (1.0 - la) + la, -nn); },
                      -static_cast<double>(m));
}

SpatialModel SpatialModel::from_analysis(const analytic::TwoStepAnalysis& analysis, const TrafficParams& traffic,
                                         bool use_step2) {
    const auto& moments = use_step2 ? analysis.step2 : analysis.step1;
    const auto& law = use_step2 ? analysis.step2_fit : analysis.step1_fit;
    return SpatialModel{moments.params(), traffic, moments, law, moments.control(), SnmMethod::Quadrature};
}

SpatialModel SpatialModel::two_step(const NetworkParams& params, const TrafficParams& traffic,
                                    const numerics::SeriesControl& ctrl) {
    return from_analysis(analytic::analyze_two_step(params, traffic, ctrl), traffic, true);
}

SpatialModel SpatialModel::step_one(const NetworkParams& params, const TrafficParams& traffic,
                                    const numerics::SeriesControl& ctrl) {
    analytic::SuccessMoments moments(params, ActivityMoments::saturated(params.xi()), ctrl);
    auto law = analytic::fit_success_distribution(moments(1), moments(2));
    return SpatialModel{params, traffic, moments, law, ctrl, SnmMethod::Quadrature};
}

double s_nm(unsigned n, unsigned m, const SpatialModel& model) {
    const double xi = model.params.xi();
    auto moments = [&model](int b) { return model.moments(b); };
    if (n == 0) return model.moments(-static_cast<int>(m));

    if (model.snm_method == SnmMethod::Series) {
        try {
            return s_nm_series(n, m, moments, xi, model.traffic, model.ctrl);
        } catch (const numerics::NumericsError& e) {
            log::warn(std::string("S(n;m) series path failed, using quadrature: ") + e.what());
            return s_nm_quadrature(n, m, model.law, xi, model.traffic);
        }
    }
    if (model.law.is_beta() && !(model.law.beta().kappa1 > static_cast<double>(m)))
        return s_nm_recursive(n, m, model);
    return s_nm_quadrature(n, m, model.law, xi, model.traffic);
}

double s_nm_recursive(unsigned n, unsigned m, const SpatialModel& model) {
    if (n == 0) return model.moments(-static_cast<int>(m));
    if (m == 0) return s_nm_quadrature(n, 0, model.law, model.params.xi(), model.traffic);
    // 1 = (S_a - c mu) / lambda_a with c = xi (1 - lambda_a).
    const double la = model.traffic.lambda_a();
    const double c = model.params.xi() * (1.0 - la);
    return (s_nm_recursive(n - 1, m, model) - c * s_nm_recursive(n, m - 1, model)) / la;
}

double moment_paoi_np(unsigned b, double z_a, double xi, const MomentFunction& moments) {
    double total = 0.0;
    for (unsigned n = 0; n <= b; ++n) {
        total += binomial(b, n) * std::pow(z_a, static_cast<double>(b - n)) *
                 std::pow(2.0 / xi, static_cast<double>(n)) * moments(-static_cast<int>(n));
    }
    return total;
}

double moment_paoi(unsigned b, Discipline discipline, const SpatialModel& model) {
    const double za = model.traffic.z_a();
    const double xi = model.params.xi();
    if (discipline == Discipline::NonPreemptive)
        return moment_paoi_np(b, za, xi, [&model](int l) { return model.moments(l); });
    double total = 0.0;
    for (unsigned l = 0; l <= b; ++l) {
        for (unsigned m = 0; l + m <= b; ++m) {
            const unsigned n = b - l - m;
            total += multinomial(b, l, m, n) * std::pow(za, static_cast<double>(l)) *
                     std::pow(xi, -static_cast<double>(m)) * s_nm(n, m, model);
        }
    }
    return total;
}

double PAoIMoments::std_dev() const noexcept { return std::sqrt(std::max(0.0, variance())); }

double p1_closed_form(Discipline discipline, const SpatialModel& model) {
    const double za = model.traffic.z_a();
    const double xi = model.params.xi();
    const double mm1 = model.moments(-1);
    if (!std::isfinite(mm1)) return kInf;
    if (discipline == Discipline::NonPreemptive) return za + 2.0 * mm1 / xi;
    return za + mm1 / xi + s_nm(1, 0, model);
}

double p2_closed_form(Discipline discipline, const SpatialModel& model) {
    const double za = model.traffic.z_a();
    const double xi = model.params.xi();
    const double mm1 = model.moments(-1);
    const double mm2 = model.moments(-2);
    if (!std::isfinite(mm1) || !std::isfinite(mm2)) return kInf;
    if (discipline == Discipline::NonPreemptive) return za * za + 4.0 * za * mm1 / xi + 4.0 * mm2 / (xi * xi);
    return za * za + 2.0 * za * mm1 / xi + mm2 / (xi * xi) + 2.0 * za * s_nm(1, 0, model) +
           2.0 * s_nm(1, 1, model) / xi + s_nm(2, 0, model);
}

double variance_np_closed_form(double xi, double m_minus1, double m_minus2) {
    return 4.0 / (xi * xi) * (m_minus2 - m_minus1 * m_minus1);
}

double variance_np_closed_form(const SpatialModel& model) {
    return variance_np_closed_form(model.params.xi(), model.moments(-1), model.moments(-2));
}

PAoIMoments paoi_moments(Discipline discipline, const SpatialModel& model) {
    return {discipline, p1_closed_form(discipline, model), p2_closed_form(discipline, model),
            PAoIMoments::Provenance::AnalyticBound};
}

double cdf_mean_paoi(double x, Discipline discipline, const analytic::SuccessDistribution& law, double xi,
                     const TrafficParams& traffic) {
    if (std::isnan(x)) throw std::domain_error("cdf_mean_paoi: x is NaN");
    if (std::isinf(x)) return x > 0.0 ? 1.0 : 0.0;
    const double floor_value = mean_paoi(discipline, 1.0, xi, traffic);
    if (x < floor_value) return 0.0;

    double mu_star = 0.0;
    if (discipline == Discipline::NonPreemptive) {
        mu_star = std::clamp(2.0 / (xi * (x - traffic.z_a())), 0.0, 1.0);
    } else {
        try {
            mu_star = numerics::find_root_decreasing(
                [&](double mu) { return mean_paoi_p(mu, xi, traffic) - x; }, 1e-12, 1.0, 1e-10);
        } catch (const numerics::NoRootError& e) {
            mu_star = e.function_positive() ? 1.0 : 0.0;
        }
    }
    // P[mu >= mu*]
    if (law.is_beta()) return 1.0 - law.cdf(mu_star);
    return law.point() >= mu_star ? 1.0 : 0.0;
}

double cdf_mean_paoi(double x, Discipline discipline, const analytic::BetaApprox& ba, double xi,
                     const TrafficParams& traffic) {
    return cdf_mean_paoi(x, discipline, analytic::SuccessDistribution(ba), xi, traffic);
}

} // namespace agemap::paoi
