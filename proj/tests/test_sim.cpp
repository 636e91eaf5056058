#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "agemap/analytic.hpp"
#include "agemap/log.hpp"
#include "agemap/paoi.hpp"
#include "agemap/simulator.hpp"

using namespace agemap;
using namespace agemap::sim;

namespace {

const NetworkParams kDefaults(1e-3, 15.0, 4.0, db_to_linear(3.0), 0.5);

Realization single_link(double r) { return Realization{1000.0, {{500.0, 500.0}}, {{500.0 + r, 500.0}}, 1}; }

struct MeanSe {
    double mean;
    double se;
};

// Mean over independent seeds with the standard error taken from their spread.
template <class F>
MeanSe batch_means(int batches, F&& f) {
    std::vector<double> v;
    for (int i = 0; i < batches; ++i) v.push_back(f(static_cast<std::uint64_t>(i + 1)));
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / (v.size() - 1.0) / v.size())};
}

double single_link_mean(Discipline d, double xi, double la, std::uint64_t seed, std::uint64_t slots) {
    auto cfg = SimConfig::with_defaults(kDefaults.with_xi(xi), TrafficParams(la), d);
    cfg.mode = SimMode::SingleLink;
    cfg.seed = seed;
    cfg.warmup_slots = 100;
    cfg.measure_slots = slots;
    return run(cfg, single_link(15.0)).links[0].mean_paoi();
}

} // namespace

TEST_SUITE("sim") {

TEST_CASE("Poisson link count") {
    auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3));
    double total = 0.0;
    for (std::uint64_t s = 1; s <= 200; ++s) {
        cfg.seed = s;
        total += static_cast<double>(generate_network(cfg).size());
    }
    CHECK(std::abs(total / 200.0 - 1000.0) <= 3.0 * std::sqrt(1000.0) / std::sqrt(200.0));
}

TEST_CASE("torus geometry") {
    auto cfg = SimConfig::with_defaults(kDefaults.with_lambda_sd(1e-4), TrafficParams(0.3));
    cfg.window_side = 1000.0;
    const auto net = generate_network(cfg);
    double worst = 0.0;
    for (const auto& a : net.sources)
        for (const auto& b : net.destinations) worst = std::max(worst, net.distance(a, b));
    CHECK(worst <= 1000.0 / std::sqrt(2.0) + 1e-9);
    for (std::size_t i = 0; i < net.size(); ++i)
        CHECK(net.distance(net.sources[i], net.destinations[i]) == doctest::Approx(15.0).epsilon(1e-9));
    CHECK(SimConfig::default_window(1e-3) == 1000.0);
    CHECK(SimConfig::default_window(1e-4) == doctest::Approx(std::sqrt(5e6)));
}

TEST_CASE("nearest interferer follows the contact distribution") {
    auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3));
    std::vector<double> nearest;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        cfg.seed = s;
        const auto net = generate_network(cfg);
        for (std::size_t z = 0; z < net.size(); ++z) {
            double best = INFINITY;
            for (std::size_t x = 0; x < net.size(); ++x)
                if (x != z) best = std::min(best, net.distance(net.sources[x], net.destinations[z]));
            nearest.push_back(best);
        }
    }
    std::sort(nearest.begin(), nearest.end());
    double ks = 0.0;
    const double n = static_cast<double>(nearest.size());
    for (std::size_t i = 0; i < nearest.size(); ++i) {
        const double f = 1.0 - std::exp(-M_PI * 1e-3 * nearest[i] * nearest[i]);
        ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
    }
    CHECK(ks <= 0.05);
}

TEST_CASE("empty realizations are redrawn") {
    std::vector<std::string> warnings;
    auto old = log::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
    auto cfg = SimConfig::with_defaults(kDefaults.with_lambda_sd(1e-9), TrafficParams(0.3));
    cfg.window_side = 1000.0;
    const auto net = generate_network(cfg);
    log::set_warning_sink(old);
    CHECK(net.size() >= 1);
    CHECK(net.attempts > 1);
    CHECK(warnings.size() == net.attempts - 1);
}

TEST_CASE("config validation") {
    auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3));
    CHECK(cfg.validate().empty());
    cfg.window_side = 200.0;
    CHECK(cfg.validate().size() == 1);
    cfg.window_side = 20.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.001));
    CHECK(cfg.validate().size() == 1);
    CHECK(parse_mode(to_string(SimMode::DominantStep1)) == SimMode::DominantStep1);
    CHECK(parse_fading("explicit") == FadingModel::ExplicitGains);
    CHECK_THROWS_AS(parse_mode("bogus"), std::invalid_argument);
}

TEST_CASE("zero-buffer queue") {
    LinkQueue np(Discipline::NonPreemptive);
    CHECK_FALSE(np.busy());
    CHECK(np.arrive(3));
    CHECK_FALSE(np.arrive(4));
    CHECK(np.birth_slot() == 3);
    CHECK_FALSE(np.end_slot(4, false));
    auto d = np.end_slot(5, true);
    REQUIRE(d);
    CHECK(d->system_time == 3);
    CHECK_FALSE(d->has_peak);
    CHECK(np.age() == 3);
    CHECK_FALSE(np.end_slot(6, false));
    CHECK(np.age() == 4);

    LinkQueue p(Discipline::Preemptive);
    p.arrive(3);
    CHECK(p.arrive(4));
    CHECK(p.birth_slot() == 4);
    d = p.end_slot(4, true);
    CHECK(d->system_time == 1);
    CHECK_THROWS_AS(p.end_slot(5, true), std::logic_error);
}

TEST_CASE("peak identity on hand-built traces") {
    const std::vector<bool> all(10, true);
    const auto t = replay_link(Discipline::NonPreemptive, all, all);
    REQUIRE(t.peaks.size() == 10);
    for (std::size_t k = 1; k < t.peaks.size(); ++k) CHECK(t.peaks[k] == 2);
    CHECK(paoi_identity_check(t).ok);

    // arrivals every slot, one failed attempt at slot 4
    std::vector<bool> ok(10, true);
    ok[4] = false;
    const auto r = replay_link(Discipline::NonPreemptive, all, ok);
    CHECK(r.delivery_slots == std::vector<std::uint64_t>{0, 1, 2, 3, 5, 6, 7, 8, 9});
    CHECK(r.peaks[4] == 3);
    CHECK(r.peaks[5] == 3);
    CHECK(paoi_identity_check(r).ok);
    const auto rp = replay_link(Discipline::Preemptive, all, ok);
    CHECK(rp.peaks[4] == 3);
    CHECK(rp.peaks[5] == 2);

    auto broken = r;
    broken.peaks[6] += 1;
    const auto check = paoi_identity_check(broken);
    CHECK_FALSE(check.ok);
    CHECK(check.first_mismatch == 6u);
    CHECK(check.diagnostic.find("delivery 6") != std::string::npos);
}

TEST_CASE("peak identity on a long random trace") {
    for (auto d : {Discipline::NonPreemptive, Discipline::Preemptive}) {
        auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3), d);
        cfg.mode = SimMode::SingleLink;
        cfg.warmup_slots = 0;
        cfg.measure_slots = 100000;
        cfg.trace_link = 0;
        const auto s = run(cfg, single_link(15.0));
        REQUIRE(s.trace);
        const auto check = paoi_identity_check(*s.trace);
        CHECK(check.ok);
        CHECK(check.checked > 10000);
        CHECK(std::all_of(s.trace->peaks.begin() + 1, s.trace->peaks.end(), [](auto a) { return a >= 2; }));
    }
}

TEST_CASE("single link means") {
    const auto a = batch_means(10, [](std::uint64_t s) {
        return single_link_mean(Discipline::NonPreemptive, 1.0, 0.5, s, 100000);
    });
    CHECK(std::abs(a.mean - 3.0) <= 3.0 * a.se);
    const auto np = batch_means(10, [](std::uint64_t s) {
        return single_link_mean(Discipline::NonPreemptive, 0.5, 0.3, s, 100000);
    });
    CHECK(std::abs(np.mean - 19.0 / 3.0) <= 3.0 * np.se);
    const auto p = batch_means(10, [](std::uint64_t s) {
        return single_link_mean(Discipline::Preemptive, 0.5, 0.3, s, 100000);
    });
    CHECK(std::abs(p.mean - paoi::mean_paoi_p(1.0, 0.5, TrafficParams(0.3))) <= 3.0 * p.se);
}

TEST_CASE("preemptive delivery times and second moment") {
    const double la = 0.3, rate = 0.4;
    const auto r = simulate_single_queue(Discipline::Preemptive, la, rate, 1000000, 5);
    REQUIRE(r.service_times.size() == 1000000);
    std::vector<double> counts(200, 0.0);
    for (auto t : r.service_times) counts[std::min<std::uint64_t>(t, 199)] += 1.0;
    const TrafficParams tr(la);
    double tv = 0.0, tail = 1.0;
    for (unsigned m = 1; m < 199; ++m) {
        const double pm = paoi::service_pmf_p(m, 0.8, 0.5, tr);
        tv += std::abs(counts[m] / 1e6 - pm);
        tail -= pm;
    }
    tv += std::abs(counts[199] / 1e6 - tail);
    CHECK(0.5 * tv <= 0.01);

    // E[A^2] from the mgf against batch means of the simulated peaks
    const double h = 1e-4;
    const double m2 = (paoi::paoi_mgf_p(h, 0.8, 0.5, tr) - 2.0 + paoi::paoi_mgf_p(-h, 0.8, 0.5, tr)) / (h * h);
    std::vector<double> batches;
    const std::size_t per = r.peaks.size() / 20;
    for (std::size_t b = 0; b < 20; ++b) {
        double s = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += static_cast<double>(r.peaks[i] * r.peaks[i]);
        batches.push_back(s / per);
    }
    const double mean = std::accumulate(batches.begin(), batches.end(), 0.0) / 20.0;
    double ss = 0.0;
    for (double x : batches) ss += (x - mean) * (x - mean);
    CHECK(std::abs(mean - m2) <= 3.0 * std::sqrt(ss / 19.0 / 20.0));
}

TEST_CASE("success frequencies match the product formula") {
    const NetworkParams p = kDefaults.with_beta(2.0).with_link_distance(10.0);
    const std::vector<double> none{};
    auto lone = single_link(10.0);
    const std::vector<double> one_act{0.5};
    CHECK(empirical_success_prob(lone, one_act, p, 1000, 1)[0] == 1.0);

    Realization pair{1000.0, {{0.0, 0.0}, {30.0, 10.0}}, {{10.0, 0.0}, {40.0, 10.0}}, 1};
    const std::vector<double> on{1.0, 1.0};
    const std::uint64_t slots = 200000;
    const auto freq = empirical_success_prob(pair, on, p, slots, 2);
    const double d = pair.distance(pair.sources[1], pair.destinations[0]);
    const double expected = 1.0 / (1.0 + 2.0 * std::pow(10.0, 4.0) * std::pow(d, -4.0));
    CHECK(std::abs(freq[0] - expected) <= 3.0 * std::sqrt(expected * (1.0 - expected) / slots));

    auto cfg = SimConfig::with_defaults(p.with_lambda_sd(5e-4), TrafficParams(0.3));
    cfg.window_side = 400.0;
    cfg.seed = 9;
    const auto net = generate_network(cfg);
    CHECK(net.size() >= 30);
    const std::vector<double> half(net.size(), 0.5);
    const auto product = product_success_prob(net, half, p);
    for (auto fading : {FadingModel::ExplicitGains, FadingModel::ConditionalProduct}) {
        const auto f = empirical_success_prob(net, half, p, 20000, 3, fading);
        for (std::size_t z = 0; z < net.size(); ++z) {
            const double se = std::sqrt(product[z] * (1.0 - product[z]) / 20000.0);
            CHECK(std::abs(f[z] - product[z]) <= 3.0 * se);
        }
    }
}

TEST_CASE("network runs") {
    auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3));
    cfg.window_side = 400.0;  // 160 links on average
    cfg.warmup_slots = 500;
    cfg.measure_slots = 5000;
    cfg.seed = 4;
    const auto net = generate_network(cfg);
    const auto np = run(cfg, net);
    cfg.discipline = Discipline::Preemptive;
    const auto p = run(cfg, net);
    cfg.discipline = Discipline::NonPreemptive;
    cfg.mode = SimMode::DominantStep1;
    const auto dom = run(cfg, net);

    SUBCASE("determinism") {
        cfg.mode = SimMode::Original;
        CHECK(run(cfg, net).to_json(true) == np.to_json(true));
    }
    SUBCASE("activity never exceeds xi") {
        for (const auto& l : np.links) {
            CHECK(l.activity() <= 0.5);
            CHECK(l.tx_fraction() <= l.busy_fraction() + 1e-12);
        }
    }
    SUBCASE("preemption dominates on shared streams") {
        REQUIRE(np.links.size() == p.links.size());
        for (std::size_t i = 0; i < np.links.size(); ++i) {
            CHECK(np.links[i].busy_slots == p.links[i].busy_slots);
            CHECK(p.links[i].mean_paoi() <= np.links[i].mean_paoi() + 3.0 * np.links[i].sem());
        }
    }
    SUBCASE("dominant system is worse") {
        CHECK(np.spatial_mean() <= dom.spatial_mean() + 3.0 * std::hypot(np.spatial_sem(), dom.spatial_sem()));
        const auto step1 = paoi::SpatialModel::step_one(kDefaults, TrafficParams(0.3));
        const double bound = paoi::p1_closed_form(Discipline::NonPreemptive, step1);
        CHECK(np.spatial_mean() <= bound + 3.0 * np.spatial_sem());
        CHECK(dom.spatial_mean() <= bound + 3.0 * dom.spatial_sem());
    }
    SUBCASE("summary bookkeeping") {
        CHECK(np.n_included() + np.n_excluded() == np.links.size());
        const auto means = np.sorted_means();
        CHECK(std::is_sorted(means.begin(), means.end()));
        CHECK(np.ecdf(means.back()) == 1.0);
        CHECK(np.ecdf(0.0) == 0.0);
        const auto j = nlohmann::json::parse(np.to_json(true));
        CHECK(j["n_links"] == np.links.size());
        CHECK(j["links"].size() == np.links.size());
        CHECK_FALSE(nlohmann::json::parse(np.to_json(false)).contains("links"));
        std::ostringstream os;
        np.write_ecdf_csv(os);
        CHECK(os.str().rfind("x,F_hat,n_links\n", 0) == 0);
        const auto merged = SpatialSummary::merge({np, p});
        CHECK(merged.links.size() == 2 * np.links.size());
    }
}

TEST_CASE("replicated runs") {
    auto cfg = SimConfig::with_defaults(kDefaults, TrafficParams(0.3));
    cfg.window_side = 300.0;
    cfg.warmup_slots = 200;
    cfg.measure_slots = 1000;
    cfg.seed = 20;
    const auto a = run_replicated(cfg, 3, 2);
    const auto b = run_replicated(cfg, 3, 1);
    CHECK(a.to_json(true) == b.to_json(true));
    auto c1 = cfg;
    c1.seed = 21;
    const auto second = run(c1, generate_network(c1));
    std::size_t offset = 0;
    for (const auto& l : a.links)
        if (l.realization == 0) ++offset;
    REQUIRE(a.links.size() >= offset + second.links.size());
    CHECK(a.links[offset].sum_peaks == second.links[0].sum_peaks);
    CHECK(a.links[offset].realization == 1);
}

}
