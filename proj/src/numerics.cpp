#include "agemap/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace agemap::numerics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 200'000;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) return h;
    }
    throw ConvergenceError("reg_inc_beta: continued fraction did not converge", h, 0.0);
}

// QUADPACK qk21 tables.
constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};
constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.14887433898163121088482600112972,
    0.0};
constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.03255816230796472747881897245939,
    0.05475589657435199603138130024458,  0.07503967481091995276704314091619,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};

struct Panel {
    double lo;
    double hi;
    double value;
    double error;

    bool operator<(const Panel& other) const { return error < other.error; }
};

Panel gauss_kronrod_21(const RealFunction& f, double lo, double hi) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double fc = f(center);
    double res_gauss = 0.0;
    double res_kronrod = kKronrodWeights[10] * fc;
    double res_abs = std::abs(res_kronrod);
    std::array<double, 10> fv1{};
    std::array<double, 10> fv2{};
    for (int j = 0; j < 10; ++j) {
        const double dx = half * kKronrodNodes[j];
        const double f1 = f(center - dx);
        const double f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        const double sum = f1 + f2;
        res_kronrod += kKronrodWeights[j] * sum;
        res_abs += kKronrodWeights[j] * (std::abs(f1) + std::abs(f2));
        if (j % 2 == 1) res_gauss += kGaussWeights[j / 2] * sum;
    }
    const double mean = 0.5 * res_kronrod;
    double res_asc = kKronrodWeights[10] * std::abs(fc - mean);
    for (int j = 0; j < 10; ++j)
        res_asc += kKronrodWeights[j] * (std::abs(fv1[j] - mean) + std::abs(fv2[j] - mean));

    const double result = res_kronrod * half;
    res_abs *= std::abs(half);
    res_asc *= std::abs(half);
    double err = std::abs((res_kronrod - res_gauss) * half);
    if (res_asc != 0.0 && err != 0.0) err = res_asc * std::min(1.0, std::pow(200.0 * err / res_asc, 1.5));
    if (res_abs > std::numeric_limits<double>::min() / (50.0 * kEps))
        err = std::max(50.0 * kEps * res_abs, err);
    if (!std::isfinite(result)) err = kInf;
    return {lo, hi, result, err};
}

} // namespace

void SeriesControl::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || max_terms < 1)
        throw std::invalid_argument("SeriesControl: tolerances must be positive and max_terms >= 1");
}

double gen_binomial(double x, unsigned k) noexcept {
    double r = 1.0;
    for (unsigned i = 1; i <= k; ++i) r *= (x - static_cast<double>(i) + 1.0) / static_cast<double>(i);
    return r;
}

double reg_inc_beta(double x, double a, double b) {
    if (!(x >= 0.0 && x <= 1.0) || !(a > 0.0) || !(b > 0.0))
        throw std::domain_error("reg_inc_beta: requires 0 <= x <= 1, a > 0, b > 0");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
    return 1.0 - std::exp(log_front) * beta_continued_fraction(1.0 - x, b, a) / b;
}

double beta_pdf(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("beta_pdf: requires a > 0, b > 0");
    if (x < 0.0 || x > 1.0) return 0.0;
    if (x == 0.0) return a < 1.0 ? kInf : (a == 1.0 ? b : 0.0);
    if (x == 1.0) return b < 1.0 ? kInf : (b == 1.0 ? a : 0.0);
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b));
}

double integrate(const RealFunction& f, double lo, double hi, double tol, double abs_tol,
                 std::size_t max_intervals) {
    if (!(tol > 0.0)) throw std::invalid_argument("integrate: requires tol > 0");
    if (std::isnan(lo) || std::isnan(hi)) throw std::invalid_argument("integrate: NaN bound");
    if (lo == hi) return 0.0;
    if (hi < lo) return -integrate(f, hi, lo, tol, abs_tol, max_intervals);

    std::priority_queue<Panel> panels;
    Panel first = gauss_kronrod_21(f, lo, hi);
    double total = first.value;
    double total_err = first.error;
    double frozen_err = 0.0;
    panels.push(first);
    std::size_t used = 1;

    while (total_err > std::max(abs_tol, tol * std::abs(total))) {
        if (panels.empty() || used >= max_intervals || !std::isfinite(total)) {
            throw ConvergenceError("integrate: error target not met within interval budget", total,
                                   total_err);
        }
        const Panel worst = panels.top();
        panels.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi) ||
            (worst.hi - worst.lo) < 8.0 * kEps * std::max(std::abs(worst.lo), std::abs(worst.hi))) {
            // Cannot refine further in double precision; keep its contribution.
            frozen_err += worst.error;
            if (panels.empty() && frozen_err > std::max(abs_tol, tol * std::abs(total)))
                throw ConvergenceError("integrate: roundoff limits achievable accuracy", total, total_err);
            continue;
        }
        const Panel left = gauss_kronrod_21(f, worst.lo, mid);
        const Panel right = gauss_kronrod_21(f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        panels.push(left);
        panels.push(right);
        ++used;
    }
    // Re-sum to shed accumulated cancellation from the running update.
    double resummed = 0.0;
    while (!panels.empty()) {
        resummed += panels.top().value;
        panels.pop();
    }
    return std::abs(resummed - total) <= total_err + 1e-12 * std::abs(total) ? resummed : total;
}

namespace {

double beta_expectation_impl(const RealFunction& g, double a, double b, double tol) {
    const double lb = log_beta(a, b);
    const double mean = a / (a + b);
    const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));

    // Breakpoints around the bulk so a concentrated density is never missed.
    std::vector<double> cuts{0.0, 1.0, mean};
    for (double k : {1.0, 3.0, 6.0, 12.0, 24.0}) {
        cuts.push_back(mean - k * sd);
        cuts.push_back(mean + k * sd);
    }
    std::erase_if(cuts, [](double c) { return !(c >= 0.0 && c <= 1.0); });
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto density_term = [&](double x) {
        if (x <= 0.0 || x >= 1.0) return 0.0;
        return g(x) * std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lb);
    };

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i];
        const double hi = cuts[i + 1];
        if (!(hi > lo)) continue;
        const bool first = (i == 0);
        const bool last = (i + 2 == cuts.size());
        if (first && a < 1.0) {
            // x = v^{1/a}: x^{a-1} dx = dv / a
            const double vmax = std::pow(hi, a);
            total += integrate(
                [&](double v) {
                    const double x = std::pow(v, 1.0 / a);
                    if (x >= 1.0) return 0.0;
                    return g(x) * std::exp((b - 1.0) * std::log1p(-x) - lb) / a;
                },
                0.0, vmax, tol, 1e-300);
        } else if (last && b < 1.0) {
            // 1 - x = w^{1/b}: (1-x)^{b-1} dx = -dw / b
            const double wmax = std::pow(1.0 - lo, b);
            total += integrate(
                [&](double w) {
                    const double y = std::pow(w, 1.0 / b);
                    const double x = 1.0 - y;
                    if (x <= 0.0) return 0.0;
                    return g(x) * std::exp((a - 1.0) * std::log(x) - lb) / b;
                },
                0.0, wmax, tol, 1e-300);
        } else {
            total += integrate(density_term, lo, hi, tol, 1e-300);
        }
    }
    return total;
}

} // namespace

double beta_expectation(const RealFunction& g, double a, double b, double tol) {
    if (!(b > 0.0)) throw std::domain_error("beta_expectation: requires b > 0");
    if (!(a > 0.0)) return kInf;
    return beta_expectation_impl(g, a, b, tol);
}

double beta_expectation_shifted(const RealFunction& g, double a, double b, double shift, double tol) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("beta_expectation_shifted: requires a, b > 0");
    const double a_shift = a + shift;
    if (!(a_shift > 0.0)) return kInf;
    const double ratio = std::exp(log_beta(a_shift, b) - log_beta(a, b));
    return ratio * beta_expectation_impl(g, a_shift, b, tol);
}

double sum_series(const TermFunction& term, const SeriesControl& ctrl, std::size_t first) {
    ctrl.validate();
    double sum = 0.0;
    int small_run = 0;
    double last = 0.0;
    for (std::size_t i = 0; i < ctrl.max_terms; ++i) {
        last = term(first + i);
        sum += last;
        if (std::abs(last) < std::max(ctrl.abs_tol, ctrl.rel_tol * std::abs(sum))) {
            if (++small_run == 2) return sum;
        } else {
            small_run = 0;
        }
    }
    throw ConvergenceError("sum_series: max_terms exceeded", sum, std::abs(last));
}

double find_root_decreasing(const RealFunction& f, double lo, double hi, double tol) {
    if (!(lo < hi) || !(tol > 0.0)) throw std::invalid_argument("find_root_decreasing: bad bracket");
    const double f_lo = f(lo);
    const double f_hi = f(hi);
    if (f_lo < 0.0) throw NoRootError("find_root_decreasing: f(lo) < 0", false);
    if (f_hi > 0.0) throw NoRootError("find_root_decreasing: f(hi) > 0", true);
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace agemap::numerics
