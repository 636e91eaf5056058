#include <doctest.h>

#include <cmath>
#include <random>

#include "agemap/paoi.hpp"

using namespace agemap;
using namespace agemap::paoi;

namespace {
const NetworkParams kDefaults(1e-3, 15.0, 4.0, db_to_linear(3.0), 0.5);
}

TEST_SUITE("paoi") {

TEST_CASE("conditional mean, non-preemptive") {
    CHECK(mean_paoi_np(1.0, 1.0, TrafficParams(0.5)) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(mean_paoi_np(1.0, 0.5, TrafficParams(0.3)) == doctest::Approx(19.0 / 3.0).epsilon(1e-15));
    CHECK(mean_paoi_np(0.5, 0.5, TrafficParams(0.5)) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(std::isinf(mean_paoi_np(0.0, 0.5, TrafficParams(0.5))));
}

TEST_CASE("conditional mean, preemptive") {
    for (double la : {0.1, 0.5, 0.9}) {
        const TrafficParams t(la);
        CHECK(mean_paoi_p(1.0, 1.0, t) == doctest::Approx(t.z_a() + 2.0).epsilon(1e-12));
    }
    CHECK(mean_paoi_p(1.0, 0.5, TrafficParams(1.0 - 1e-12)) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(mean_paoi_p(1.0, 0.5, TrafficParams(0.3)) == doctest::Approx(7.0 / 3.0 + 2.0 + 1.0 / 0.65).epsilon(1e-14));
    CHECK(mean_paoi_p(1.0, 0.5, TrafficParams(0.3)) == doctest::Approx(5.8718).epsilon(1e-5));
    // preemption never hurts
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double mu = u(gen), xi = u(gen);
        const TrafficParams t(u(gen));
        CHECK(mean_paoi_p(mu, xi, t) <= mean_paoi_np(mu, xi, t) + 1e-12);
    }
    const ConditionalPAoI c(Discipline::Preemptive, 0.8, 0.5, TrafficParams(0.3));
    CHECK(c.q_s() == doctest::Approx(c.s_a()));
    CHECK(c.mean() == doctest::Approx(mean_paoi_p(0.8, 0.5, TrafficParams(0.3))));
    CHECK_THROWS_AS(ConditionalPAoI(Discipline::Preemptive, 0.0, 0.5, TrafficParams(0.3)), std::domain_error);
}

TEST_CASE("latest-update delivery time pmf") {
    const TrafficParams t(0.3);
    double total = 0.0, mean = 0.0;
    for (unsigned m = 1; m < 2000; ++m) {
        total += service_pmf_p(m, 0.8, 0.5, t);
        mean += m * service_pmf_p(m, 0.8, 0.5, t);
    }
    CHECK(service_pmf_p(0, 0.8, 0.5, t) == 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean == doctest::Approx(1.0 / (0.4 + 0.3 * 0.6)).epsilon(1e-10));
    // vanishing arrivals: geometric(xi mu)
    const TrafficParams rare(1e-12);
    for (unsigned m : {1u, 2u, 7u})
        CHECK(service_pmf_p(m, 0.8, 0.5, rare) == doctest::Approx(0.4 * std::pow(0.6, m - 1.0)).epsilon(1e-9));
}

TEST_CASE("moment generating function") {
    const TrafficParams t(0.3);
    CHECK(paoi_mgf_p(0.0, 1.0, 0.5, t) == doctest::Approx(1.0).epsilon(1e-14));
    const double h = 1e-5;
    const double d1 = (paoi_mgf_p(h, 1.0, 0.5, t) - paoi_mgf_p(-h, 1.0, 0.5, t)) / (2.0 * h);
    CHECK(d1 == doctest::Approx(mean_paoi_p(1.0, 0.5, t)).epsilon(1e-8));
    CHECK_THROWS_AS(paoi_mgf_p(1.0, 1.0, 0.5, t), std::domain_error);
}

TEST_CASE("S(n;m) paths") {
    const analytic::BetaApprox b22{2.0, 2.0, 0.5, 0.3};
    const analytic::SuccessDistribution law(b22);
    auto moments = [&](int l) { return b22.moment(l); };
    const TrafficParams t(0.3);
    CHECK(b22.moment(-1) == doctest::Approx(3.0));
    const double series = s_nm_series(1, 0, moments, 0.5, t);
    const double quad = s_nm_quadrature(1, 0, law, 0.5, t);
    CHECK(series == doctest::Approx(quad).epsilon(1e-6));
    CHECK(s_nm_series(0, 1, moments, 0.5, t) == doctest::Approx(3.0));
    CHECK(s_nm_series(2, 1, moments, 0.5, t) == doctest::Approx(s_nm_quadrature(2, 1, law, 0.5, t)).epsilon(1e-6));
    // lambda_a = 1 leaves only k = 0
    const TrafficParams full(1.0);
    CHECK(s_nm_series(2, 1, moments, 0.5, full) == doctest::Approx(3.0));
    CHECK(s_nm_quadrature(2, 1, law, 0.5, full) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("S(n;m) on the spatial model") {
    const TrafficParams t(0.3);
    auto model = SpatialModel::two_step(kDefaults, t);
    const auto& b = model.law.beta();
    auto law_moments = [&](int l) { return b.moment(l); };
    const double la = 0.3, c = 0.5 * 0.7;
    for (auto [n, m] : {std::pair{1u, 0u}, {1u, 1u}, {2u, 0u}, {2u, 1u}}) {
        const double q = s_nm(n, m, model);
        CHECK(s_nm_series(n, m, law_moments, 0.5, t) == doctest::Approx(q).epsilon(1e-6));
        // one step of the recursion, everything under the fitted law
        const double prev_n = n == 1 ? b.moment(-static_cast<double>(m)) : s_nm_quadrature(n - 1, m, model.law, 0.5, t);
        if (m > 0) {
            const double prev_m = s_nm_quadrature(n, m - 1, model.law, 0.5, t);
            CHECK((prev_n - c * prev_m) / la == doctest::Approx(q).epsilon(1e-9));
        }
        // with the exact inverse moments instead of the law's
        const double r = s_nm_recursive(n, m, model);
        if (m == 0) CHECK(r == doctest::Approx(q).epsilon(1e-12));
        else CHECK(r == doctest::Approx(q).epsilon(5e-2));
    }
    // the series route on the exact moments lands close to the law-based value
    auto series_model = model;
    series_model.snm_method = SnmMethod::Series;
    CHECK(s_nm(1, 0, series_model) == doctest::Approx(s_nm(1, 0, model)).epsilon(1e-2));
    CHECK(s_nm(0, 2, model) == model.moments(-2));
}

TEST_CASE("spatial moments") {
    CHECK(moment_paoi_np(2, 1.0, 0.5, [](int l) { return l == -1 ? 2.0 : l == -2 ? 5.0 : 1.0; }) ==
          doctest::Approx(97.0));
    CHECK(variance_np_closed_form(0.5, 2.0, 5.0) == doctest::Approx(16.0));

    const TrafficParams t(0.3);
    const auto model = SpatialModel::two_step(kDefaults, t);
    for (auto d : {Discipline::NonPreemptive, Discipline::Preemptive}) {
        CHECK(moment_paoi(1, d, model) == doctest::Approx(p1_closed_form(d, model)).epsilon(1e-10));
        CHECK(moment_paoi(2, d, model) == doctest::Approx(p2_closed_form(d, model)).epsilon(1e-10));
        CHECK(moment_paoi(0, d, model) == doctest::Approx(1.0));
        const auto pm = paoi_moments(d, model);
        CHECK(pm.variance() >= 0.0);
    }
    CHECK(p1_closed_form(Discipline::NonPreemptive, model) ==
          doctest::Approx(t.z_a() + 2.0 * model.moments(-1) / 0.5).epsilon(1e-14));
    const auto np = paoi_moments(Discipline::NonPreemptive, model);
    CHECK(variance_np_closed_form(model) == doctest::Approx(np.variance()).epsilon(1e-10));
    CHECK(paoi_moments(Discipline::Preemptive, model).p1 < np.p1);
    // the two-step bound is tighter than the saturated one
    const auto s1 = SpatialModel::step_one(kDefaults, t);
    CHECK(p1_closed_form(Discipline::NonPreemptive, model) < p1_closed_form(Discipline::NonPreemptive, s1));
    CHECK(p1_closed_form(Discipline::NonPreemptive, model) == doctest::Approx(10.0034).epsilon(1e-4));
    CHECK(p1_closed_form(Discipline::Preemptive, model) == doctest::Approx(8.1745).epsilon(1e-4));
}

TEST_CASE("CDF of the conditional mean") {
    const TrafficParams t(0.3);
    const auto model = SpatialModel::two_step(kDefaults, t);
    for (auto d : {Discipline::NonPreemptive, Discipline::Preemptive}) {
        const double floor_value = mean_paoi(d, 1.0, 0.5, t);
        CHECK(cdf_mean_paoi(floor_value - 1e-9, d, model.law, 0.5, t) == 0.0);
        CHECK(cdf_mean_paoi(INFINITY, d, model.law, 0.5, t) == 1.0);
        CHECK(cdf_mean_paoi(1e9, d, model.law, 0.5, t) == doctest::Approx(1.0).epsilon(1e-6));
        double prev = 0.0;
        for (double x = floor_value; x < 80.0; x += 0.5) {
            const double f = cdf_mean_paoi(x, d, model.law, 0.5, t);
            CHECK(f >= prev - 1e-12);
            prev = f;
        }
        // the median inverts to the law's median
        const auto& b = model.law.beta();
        const double mu_med = 0.6;
        const double x = mean_paoi(d, mu_med, 0.5, t);
        CHECK(cdf_mean_paoi(x, d, b, 0.5, t) == doctest::Approx(1.0 - b.cdf(mu_med)).epsilon(1e-8));
    }
    CHECK_THROWS_AS(cdf_mean_paoi(NAN, Discipline::Preemptive, model.law, 0.5, t), std::domain_error);
}

}
