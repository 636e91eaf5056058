#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/special_functions/beta.hpp>

#include "agemap/numerics.hpp"

using namespace agemap::numerics;

TEST_SUITE("numerics") {

TEST_CASE("generalized binomial") {
    CHECK(gen_binomial(-0.5, 0) == 1.0);
    CHECK(gen_binomial(-1.0, 3) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(gen_binomial(-0.5, 2) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(gen_binomial(5.0, 2) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(gen_binomial(3.0, 5) == 0.0);
    for (unsigned k = 0; k < 12; ++k) CHECK(gen_binomial(-1.0, k) == doctest::Approx(k % 2 ? -1.0 : 1.0));
}

TEST_CASE("regularized incomplete beta") {
    CHECK(reg_inc_beta(0.0, 2.0, 3.0) == 0.0);
    CHECK(reg_inc_beta(1.0, 2.0, 3.0) == 1.0);
    CHECK(reg_inc_beta(0.5, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(reg_inc_beta(0.5, 2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-14));
    // I_x(1, b) = 1 - (1-x)^b
    CHECK(reg_inc_beta(0.3, 1.0, 4.5) == doctest::Approx(1.0 - std::pow(0.7, 4.5)).epsilon(1e-13));
    CHECK_THROWS_AS(reg_inc_beta(1.5, 2.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(reg_inc_beta(0.5, -1.0, 2.0), std::domain_error);
}

TEST_CASE("incomplete beta against boost") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::uniform_real_distribution<double> ua(-2.0, 2.5);
    for (int i = 0; i < 500; ++i) {
        const double x = ux(gen);
        const double a = std::pow(10.0, ua(gen));
        const double b = std::pow(10.0, ua(gen));
        const double ref = boost::math::ibeta(a, b, x);
        CHECK(reg_inc_beta(x, a, b) == doctest::Approx(ref).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("adaptive quadrature") {
    CHECK(integrate([](double) { return 1.0; }, 0.0, 1.0, 1e-10) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(integrate([](double t) { return t; }, 0.0, 1.0, 1e-10) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(integrate([](double t) { return std::pow(1.0 - t, -0.5); }, 0.0, 0.99, 1e-10) ==
          doctest::Approx(1.8).epsilon(1e-9));
    CHECK(integrate([](double t) { return std::pow(t, -0.5); }, 0.0, 1.0, 1e-10) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(integrate([](double t) { return std::sin(t); }, 0.0, M_PI, 1e-12) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(integrate([](double t) { return t; }, 1.0, 0.0, 1e-10) == doctest::Approx(-0.5));
}

TEST_CASE("beta expectations") {
    // E[mu] and E[mu^2] of Beta(2,2)
    CHECK(beta_expectation([](double x) { return x; }, 2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(beta_expectation([](double x) { return x * x; }, 2.0, 2.0) == doctest::Approx(0.3).epsilon(1e-12));
    // singular densities at both ends
    const double a = 0.3, b = 0.6;
    CHECK(beta_expectation([](double) { return 1.0; }, a, b) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(beta_expectation([](double x) { return x; }, a, b) == doctest::Approx(a / (a + b)).epsilon(1e-10));
    // E[mu^-1] of Beta(a, b) = (a + b - 1) / (a - 1)
    CHECK(beta_expectation_shifted([](double) { return 1.0; }, 3.5, 2.0, -1.0) ==
          doctest::Approx(4.5 / 2.5).epsilon(1e-10));
    CHECK(beta_expectation_shifted([](double) { return 1.0; }, 1.2, 7.0, -1.0) ==
          doctest::Approx(7.2 / 0.2).epsilon(1e-8));
    CHECK(beta_expectation_shifted([](double x) { return x; }, 2.0, 3.0, 1.0) ==
          doctest::Approx(boost::math::beta(4.0, 3.0) / boost::math::beta(2.0, 3.0)).epsilon(1e-12));
}

TEST_CASE("series summation") {
    CHECK(sum_series([](std::size_t) { return 0.0; }, {}) == 0.0);
    CHECK(sum_series([](std::size_t k) { return std::pow(0.5, static_cast<double>(k)); }, {}) ==
          doctest::Approx(2.0).epsilon(1e-9));
    const double xi = 0.5, delta = 0.5;
    const double s = sum_series(
        [&](std::size_t m) {
            return gen_binomial(-1.0, static_cast<unsigned>(m)) * gen_binomial(delta - 1.0, static_cast<unsigned>(m - 1)) *
                   std::pow(xi, static_cast<double>(m));
        },
        {}, 1);
    CHECK(s == doctest::Approx(-xi * std::pow(1.0 - xi, delta - 1.0)).epsilon(1e-9));
    CHECK(s == doctest::Approx(-0.70711).epsilon(1e-5));

    SeriesControl ctrl;
    ctrl.max_terms = 50;
    try {
        sum_series([](std::size_t k) { return 1.0 / (k + 1.0); }, ctrl);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.best_estimate() > 4.0);
        CHECK(e.error_indicator() > 0.0);
    }
    ctrl.rel_tol = -1.0;
    CHECK_THROWS_AS(ctrl.validate(), std::invalid_argument);
}

TEST_CASE("decreasing root finder") {
    CHECK(find_root_decreasing([](double m) { return 1.0 - 2.0 * m; }, 0.0, 1.0, 1e-12) == doctest::Approx(0.5));
    CHECK(find_root_decreasing([](double m) { return 0.25 - m * m; }, 0.0, 1.0, 1e-12) == doctest::Approx(0.5));
    const double za = 1.0 / 0.3 - 1.0;
    auto ap = [&](double mu) { return za + 1.0 / (0.5 * mu) + 1.0 / (0.5 * mu + 0.3 * (1.0 - 0.5 * mu)); };
    const double x = ap(1.0);
    CHECK(find_root_decreasing([&](double mu) { return ap(mu) - x; }, 1e-12, 1.0, 1e-12) ==
          doctest::Approx(1.0).epsilon(1e-9));
    try {
        find_root_decreasing([](double m) { return 2.0 - m; }, 0.0, 1.0, 1e-12);
        FAIL("expected NoRootError");
    } catch (const NoRootError& e) {
        CHECK(e.function_positive());
    }
}

}
