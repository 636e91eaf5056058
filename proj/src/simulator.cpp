#include "agemap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "agemap/analytic.hpp"
#include "agemap/log.hpp"
#include "agemap/rng.hpp"

namespace agemap::sim {

namespace {

constexpr std::size_t kHistogramBins = 512;
constexpr std::size_t kTableLimit = 4096;

double wrap(double v, double w) {
    v = std::fmod(v, w);
    return v < 0.0 ? v + w : v;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

std::string_view to_string(SimMode m) noexcept {
    switch (m) {
    case SimMode::Original: return "original";
    case SimMode::DominantStep1: return "dominant-step1";
    case SimMode::SingleLink: return "single-link";
    }
    return "?";
}

std::string_view to_string(FadingModel f) noexcept {
    return f == FadingModel::ConditionalProduct ? "conditional-product" : "explicit-gains";
}

SimMode parse_mode(std::string_view s) {
    if (s == "original") return SimMode::Original;
    if (s == "dominant-step1" || s == "dominant" || s == "dominant_step1") return SimMode::DominantStep1;
    if (s == "single-link" || s == "single" || s == "single_link") return SimMode::SingleLink;
    throw std::invalid_argument("unknown simulation mode: " + std::string(s));
}

FadingModel parse_fading(std::string_view s) {
    if (s == "conditional-product" || s == "conditional") return FadingModel::ConditionalProduct;
    if (s == "explicit-gains" || s == "explicit") return FadingModel::ExplicitGains;
    throw std::invalid_argument("unknown fading model: " + std::string(s));
}

double SimConfig::default_window(double lambda_sd) { return std::max(1000.0, std::sqrt(500.0 / lambda_sd)); }

SimConfig SimConfig::with_defaults(const NetworkParams& network, const TrafficParams& traffic, Discipline discipline) {
    SimConfig cfg{network, traffic, discipline, default_window(network.lambda_sd()), 2000, 20000, 1,
                  SimMode::Original, FadingModel::ConditionalProduct, 50, std::nullopt};
    return cfg;
}

std::vector<std::string> SimConfig::validate() const {
    if (!(window_side > 2.0 * network.link_distance()) || !std::isfinite(window_side))
        throw std::invalid_argument("SimConfig: window side must exceed twice the link distance");
    if (measure_slots < 1) throw std::invalid_argument("SimConfig: measure_slots must be positive");
    std::vector<std::string> warnings;
    const double expected_links = network.lambda_sd() * window_side * window_side;
    if (expected_links < 100.0)
        warnings.push_back("expected link count " + format_number(expected_links) + " is below 100");
    if (static_cast<double>(warmup_slots) < 10.0 / traffic.lambda_a())
        warnings.push_back("warm-up shorter than 10 / lambda_a slots");
    return warnings;
}

double Realization::distance(const Point& a, const Point& b) const noexcept {
    double dx = std::abs(a.x - b.x);
    double dy = std::abs(a.y - b.y);
    dx = std::min(dx, window_side - dx);
    dy = std::min(dy, window_side - dy);
    return std::hypot(dx, dy);
}

Realization generate_network(const SimConfig& cfg) {
    const double w = cfg.window_side;
    const double mean = cfg.network.lambda_sd() * w * w;
    const double r = cfg.network.link_distance();
    const rng::CounterRng rng(cfg.seed);
    for (std::uint64_t attempt = 0;; ++attempt) {
        rng::StreamEngine eng(rng, rng::Stream::Geometry, attempt);
        // Count of a unit-rate Poisson process on [0, mean].
        std::size_t n = 0;
        for (double t = eng.exponential(); t <= mean; t += eng.exponential()) ++n;
        if (n == 0) {
            log::warn("generate_network: empty realization, redrawing (attempt " + std::to_string(attempt + 1) + ")");
            continue;
        }
        Realization net{w, {}, {}, attempt + 1};
        net.sources.reserve(n);
        net.destinations.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = eng.uniform() * w;
            const double y = eng.uniform() * w;
            const double theta = 2.0 * std::numbers::pi * eng.uniform();
            net.sources.push_back({x, y});
            net.destinations.push_back({wrap(x + r * std::cos(theta), w), wrap(y + r * std::sin(theta), w)});
        }
        return net;
    }
}

bool LinkQueue::arrive(std::uint64_t slot) {
    if (busy_ && discipline_ == Discipline::NonPreemptive) return false;
    busy_ = true;
    birth_ = slot;
    return true;
}

std::optional<LinkQueue::Delivery> LinkQueue::end_slot(std::uint64_t slot, bool delivered) {
    if (!delivered) {
        if (has_age_) ++age_;
        return std::nullopt;
    }
    if (!busy_) throw std::logic_error("LinkQueue: delivery while idle");
    Delivery d{slot - birth_ + 1, age_ + 1, has_age_};
    age_ = d.system_time;
    has_age_ = true;
    busy_ = false;
    return d;
}

LinkTrace replay_link(Discipline discipline, const std::vector<bool>& arrivals, const std::vector<bool>& succeeds) {
    if (arrivals.size() != succeeds.size()) throw std::invalid_argument("replay_link: length mismatch");
    LinkQueue q(discipline);
    LinkTrace trace;
    for (std::uint64_t slot = 0; slot < arrivals.size(); ++slot) {
        if (arrivals[slot]) q.arrive(slot);
        const bool delivered = q.busy() && succeeds[slot];
        if (auto d = q.end_slot(slot, delivered)) {
            trace.delivery_slots.push_back(slot);
            trace.birth_slots.push_back(slot + 1 - d->system_time);
            trace.peaks.push_back(d->has_peak ? d->peak : 0);
        }
    }
    return trace;
}

IdentityCheck paoi_identity_check(const LinkTrace& trace) {
    IdentityCheck result;
    const auto& dl = trace.delivery_slots;
    for (std::size_t k = 1; k < dl.size(); ++k) {
        const std::uint64_t prev_system_time = dl[k - 1] - trace.birth_slots[k - 1] + 1;
        const std::uint64_t inter_delivery = dl[k] - dl[k - 1];
        const std::uint64_t expected = prev_system_time + inter_delivery;
        ++result.checked;
        if (trace.peaks[k] != expected) {
            result.ok = false;
            result.first_mismatch = k;
            result.diagnostic = "delivery " + std::to_string(k) + ": age-process peak " +
                                std::to_string(trace.peaks[k]) + " != T_prev + Y = " +
                                std::to_string(prev_system_time) + " + " + std::to_string(inter_delivery);
            return result;
        }
    }
    return result;
}

double LinkStats::mean_paoi() const noexcept {
    return peaks ? sum_peaks / static_cast<double>(peaks) : std::numeric_limits<double>::quiet_NaN();
}

double LinkStats::sem() const noexcept {
    if (peaks < 2) return std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(peaks);
    const double mean = sum_peaks / n;
    const double var = std::max(0.0, (sum_sq_peaks - n * mean * mean) / (n - 1.0));
    return std::sqrt(var / n);
}

double LinkStats::mu_hat() const noexcept {
    return attempts ? static_cast<double>(successes) / static_cast<double>(attempts)
                    : std::numeric_limits<double>::quiet_NaN();
}

double LinkStats::busy_fraction() const noexcept {
    return measured_slots ? static_cast<double>(busy_slots) / static_cast<double>(measured_slots) : 0.0;
}

double LinkStats::activity() const noexcept { return xi * busy_fraction(); }

double LinkStats::tx_fraction() const noexcept {
    return measured_slots ? static_cast<double>(attempts) / static_cast<double>(measured_slots) : 0.0;
}

std::size_t SpatialSummary::n_included() const noexcept {
    return static_cast<std::size_t>(std::count_if(links.begin(), links.end(), [this](const auto& l) { return included(l); }));
}

std::vector<double> SpatialSummary::sorted_means() const {
    std::vector<double> v;
    v.reserve(links.size());
    for (const auto& l : links)
        if (included(l)) v.push_back(l.mean_paoi());
    std::sort(v.begin(), v.end());
    return v;
}

double SpatialSummary::spatial_mean() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& l : links) {
        if (!included(l)) continue;
        sum += l.mean_paoi();
        ++n;
    }
    return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double SpatialSummary::spatial_sd() const {
    const double mean = spatial_mean();
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& l : links) {
        if (!included(l)) continue;
        const double d = l.mean_paoi() - mean;
        ss += d * d;
        ++n;
    }
    return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : std::numeric_limits<double>::quiet_NaN();
}

double SpatialSummary::spatial_sem() const {
    const auto n = n_included();
    return n > 1 ? spatial_sd() / std::sqrt(static_cast<double>(n)) : std::numeric_limits<double>::infinity();
}

double SpatialSummary::ecdf(double x) const {
    const auto v = sorted_means();
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto it = std::upper_bound(v.begin(), v.end(), x);
    return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
}

std::vector<double> SpatialSummary::sorted_activities() const {
    std::vector<double> v;
    v.reserve(links.size());
    for (const auto& l : links) v.push_back(l.activity());
    std::sort(v.begin(), v.end());
    return v;
}

SpatialSummary SpatialSummary::merge(const std::vector<SpatialSummary>& parts) {
    SpatialSummary out;
    if (parts.empty()) return out;
    out.mode = parts.front().mode;
    out.discipline = parts.front().discipline;
    out.seed = parts.front().seed;
    out.min_deliveries = parts.front().min_deliveries;
    out.service_time_histogram.assign(kHistogramBins, 0);
    for (const auto& p : parts) {
        out.links.insert(out.links.end(), p.links.begin(), p.links.end());
        for (std::size_t i = 0; i < p.service_time_histogram.size() && i < kHistogramBins; ++i)
            out.service_time_histogram[i] += p.service_time_histogram[i];
        if (!out.trace && p.trace) out.trace = p.trace;
    }
    return out;
}

std::string SpatialSummary::to_json(bool per_link, int indent) const {
    nlohmann::ordered_json j;
    j["mode"] = std::string(to_string(mode));
    j["discipline"] = std::string(agemap::to_string(discipline));
    j["seed"] = seed;
    j["min_deliveries"] = min_deliveries;
    j["n_links"] = links.size();
    j["n_included"] = n_included();
    j["n_excluded"] = n_excluded();
    j["spatial_mean"] = spatial_mean();
    j["spatial_sd"] = spatial_sd();
    j["spatial_sem"] = spatial_sem();
    double act = 0.0;
    for (const auto& l : links) act += l.activity();
    j["mean_activity"] = links.empty() ? 0.0 : act / static_cast<double>(links.size());
    if (per_link) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& l : links) {
            nlohmann::ordered_json e;
            e["realization"] = l.realization;
            e["index"] = l.index;
            e["peaks"] = l.peaks;
            e["mean_paoi"] = l.mean_paoi();
            e["sem"] = l.sem();
            e["mu_hat"] = l.mu_hat();
            e["activity"] = l.activity();
            e["busy_fraction"] = l.busy_fraction();
            e["included"] = included(l);
            arr.push_back(std::move(e));
        }
        j["links"] = std::move(arr);
    }
    return j.dump(indent);
}

void SpatialSummary::write_ecdf_csv(std::ostream& out) const {
    const auto v = sorted_means();
    out << "x,F_hat,n_links\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
        // Emit the top of each step only once for tied values.
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
        out << format_number(v[i]) << ',' << format_number(static_cast<double>(i + 1) / static_cast<double>(v.size()))
            << ',' << v.size() << '\n';
    }
}

SpatialSummary run(const SimConfig& cfg) {
    for (const auto& w : cfg.validate()) log::warn("simulation: " + w);
    return run(cfg, generate_network(cfg));
}

SpatialSummary run(const SimConfig& cfg, const Realization& net) {
    cfg.validate();
    const std::size_t n = net.size();
    const rng::CounterRng rng(cfg.seed);
    const double alpha = cfg.network.alpha();
    const double xi = cfg.network.xi();
    const double beta = cfg.network.beta();
    const double la = cfg.traffic.lambda_a();
    const double r_alpha = std::pow(cfg.network.link_distance(), alpha);
    const double scale = beta * r_alpha;
    const bool interference = cfg.mode != SimMode::SingleLink && n > 1;
    const bool explicit_gains = cfg.fading == FadingModel::ExplicitGains;

    // Per-pair weight: log P[pair does not break the SIR test] for the
    // conditional model, path gain d^{-alpha} for explicit gains.
    auto pair_weight = [&](std::size_t z, std::size_t x) -> double {
        if (z == x) return 0.0;
        const double d = net.distance(net.sources[x], net.destinations[z]);
        if (explicit_gains) return std::pow(d, -alpha);
        const double da = std::pow(d, alpha);
        return std::log(da / (da + scale));
    };
    const bool use_table = interference && n <= kTableLimit;
    std::vector<float> table;
    if (use_table) {
        table.resize(n * n);
        for (std::size_t z = 0; z < n; ++z)
            for (std::size_t x = 0; x < n; ++x) table[z * n + x] = static_cast<float>(pair_weight(z, x));
    }
    auto weight = [&](std::size_t z, std::size_t x) -> double {
        return use_table ? static_cast<double>(table[z * n + x]) : pair_weight(z, x);
    };

    std::vector<LinkQueue> queues(n, LinkQueue(cfg.discipline));
    SpatialSummary summary;
    summary.mode = cfg.mode;
    summary.discipline = cfg.discipline;
    summary.seed = cfg.seed;
    summary.min_deliveries = cfg.min_deliveries;
    summary.links.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        summary.links[i].index = i;
        summary.links[i].xi = xi;
    }
    summary.service_time_histogram.assign(kHistogramBins, 0);
    if (cfg.trace_link && *cfg.trace_link < n) summary.trace = LinkTrace{};

    std::vector<std::uint32_t> active;
    std::vector<std::uint32_t> transmitting;
    std::vector<char> delivered(n, 0);
    active.reserve(n);
    transmitting.reserve(n);

    const std::uint64_t total = cfg.warmup_slots + cfg.measure_slots;
    for (std::uint64_t slot = 0; slot < total; ++slot) {
        const bool measuring = slot >= cfg.warmup_slots;
        active.clear();
        transmitting.clear();
        for (std::size_t z = 0; z < n; ++z) {
            if (rng.uniform(rng::Stream::Arrival, z, slot) < la) queues[z].arrive(slot);
            const bool access = rng.uniform(rng::Stream::Access, z, slot) < xi;
            const bool busy = queues[z].busy();
            if (measuring) {
                ++summary.links[z].measured_slots;
                if (busy) ++summary.links[z].busy_slots;
            }
            if (busy && access) transmitting.push_back(static_cast<std::uint32_t>(z));
            if (access && (busy || cfg.mode == SimMode::DominantStep1)) active.push_back(static_cast<std::uint32_t>(z));
        }

        for (const auto z : transmitting) {
            bool success = true;
            if (interference) {
                if (explicit_gains) {
                    double interference_power = 0.0;
                    for (const auto x : active)
                        if (x != z)
                            interference_power += rng.exponential(rng::Stream::InterferenceGain, z, slot, x) * weight(z, x);
                    const double desired = rng.exponential(rng::Stream::DesiredGain, z, slot) / r_alpha;
                    success = desired > beta * interference_power;
                } else {
                    double log_clear = 0.0;
                    if (use_table) {
                        const float* row = table.data() + static_cast<std::size_t>(z) * n;
                        for (const auto x : active) log_clear += row[x];
                    } else {
                        for (const auto x : active) log_clear += weight(z, x);
                    }
                    success = rng.uniform(rng::Stream::Success, z, slot) < std::exp(log_clear);
                }
            }
            delivered[z] = success ? 1 : 0;
            if (measuring) {
                auto& st = summary.links[z];
                ++st.attempts;
                if (success) ++st.successes;
            }
        }

        for (std::size_t z = 0; z < n; ++z) {
            const auto d = queues[z].end_slot(slot, delivered[z] != 0);
            delivered[z] = 0;
            if (!d) continue;
            if (summary.trace && z == *cfg.trace_link) {
                summary.trace->delivery_slots.push_back(slot);
                summary.trace->birth_slots.push_back(slot + 1 - d->system_time);
                summary.trace->peaks.push_back(d->has_peak ? d->peak : 0);
            }
            if (!measuring) continue;
            summary.service_time_histogram[std::min<std::uint64_t>(d->system_time, kHistogramBins - 1)]++;
            if (d->has_peak) {
                auto& st = summary.links[z];
                const double a = static_cast<double>(d->peak);
                ++st.peaks;
                st.sum_peaks += a;
                st.sum_sq_peaks += a * a;
            }
        }
    }
    return summary;
}

SpatialSummary run_replicated(const SimConfig& cfg, unsigned realizations, unsigned threads) {
    if (realizations == 0) throw std::invalid_argument("run_replicated: need at least one realization");
    for (const auto& w : cfg.validate()) log::warn("simulation: " + w);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SpatialSummary> parts(realizations);
    std::vector<std::future<void>> pending;
    unsigned next = 0;
    auto worker = [&](unsigned k) {
        SimConfig c = cfg;
        c.seed = cfg.seed + k;
        if (k != 0) c.trace_link.reset();
        parts[k] = run(c, generate_network(c));
        for (auto& l : parts[k].links) l.realization = k;
    };
    while (next < realizations) {
        pending.clear();
        for (unsigned t = 0; t < threads && next < realizations; ++t, ++next)
            pending.push_back(std::async(std::launch::async, worker, next));
        for (auto& f : pending) f.get();
    }
    auto merged = SpatialSummary::merge(parts);
    merged.seed = cfg.seed;
    return merged;
}

std::vector<double> empirical_success_prob(const Realization& net, std::span<const double> activities,
                                           const NetworkParams& params, std::uint64_t slots, std::uint64_t seed,
                                           FadingModel fading) {
    const std::size_t n = net.size();
    if (activities.size() != n) throw std::invalid_argument("empirical_success_prob: one activity per link");
    const rng::CounterRng rng(seed);
    const double alpha = params.alpha();
    const double beta = params.beta();
    const double r_alpha = std::pow(params.link_distance(), alpha);
    const double scale = beta * r_alpha;

    std::vector<double> gain(n * n, 0.0);
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t x = 0; x < n; ++x) {
            if (x == z) continue;
            const double d = net.distance(net.sources[x], net.destinations[z]);
            if (fading == FadingModel::ExplicitGains) {
                gain[z * n + x] = std::pow(d, -alpha);
            } else {
                const double da = std::pow(d, alpha);
                gain[z * n + x] = std::log(da / (da + scale));
            }
        }

    std::vector<std::uint64_t> successes(n, 0);
    std::vector<std::uint32_t> active;
    active.reserve(n);
    for (std::uint64_t slot = 0; slot < slots; ++slot) {
        active.clear();
        for (std::size_t x = 0; x < n; ++x)
            if (rng.uniform(rng::Stream::Activity, x, slot) < activities[x]) active.push_back(static_cast<std::uint32_t>(x));
        for (std::size_t z = 0; z < n; ++z) {
            bool success;
            if (fading == FadingModel::ExplicitGains) {
                double interference_power = 0.0;
                for (const auto x : active)
                    if (x != z) interference_power += rng.exponential(rng::Stream::InterferenceGain, z, slot, x) * gain[z * n + x];
                success = rng.exponential(rng::Stream::DesiredGain, z, slot) / r_alpha > beta * interference_power;
            } else {
                double log_clear = 0.0;
                for (const auto x : active) log_clear += gain[z * n + x];
                success = rng.uniform(rng::Stream::Success, z, slot) < std::exp(log_clear);
            }
            if (success) ++successes[z];
        }
    }
    std::vector<double> freq(n);
    for (std::size_t z = 0; z < n; ++z) freq[z] = static_cast<double>(successes[z]) / static_cast<double>(slots);
    return freq;
}

std::vector<double> product_success_prob(const Realization& net, std::span<const double> activities,
                                         const NetworkParams& params) {
    const std::size_t n = net.size();
    if (activities.size() != n) throw std::invalid_argument("product_success_prob: one activity per link");
    std::vector<double> out(n);
    std::vector<double> dist;
    std::vector<double> act;
    for (std::size_t z = 0; z < n; ++z) {
        dist.clear();
        act.clear();
        for (std::size_t x = 0; x < n; ++x) {
            if (x == z) continue;
            dist.push_back(net.distance(net.sources[x], net.destinations[z]));
            act.push_back(activities[x]);
        }
        out[z] = analytic::conditional_success_probability(dist, act, params);
    }
    return out;
}

SingleQueueResult simulate_single_queue(Discipline discipline, double lambda_a, double service_rate,
                                        std::uint64_t episodes, std::uint64_t seed, std::uint64_t warmup_deliveries) {
    if (!(lambda_a > 0.0 && lambda_a <= 1.0) || !(service_rate > 0.0 && service_rate <= 1.0))
        throw std::invalid_argument("simulate_single_queue: probabilities must lie in (0, 1]");
    const rng::CounterRng rng(seed);
    LinkQueue q(discipline);
    SingleQueueResult out;
    out.service_times.reserve(episodes);
    out.peaks.reserve(episodes);
    std::uint64_t seen = 0;
    for (std::uint64_t slot = 0; out.service_times.size() < episodes; ++slot) {
        if (rng.uniform(rng::Stream::Arrival, 0, slot) < lambda_a) q.arrive(slot);
        const bool delivered = q.busy() && rng.uniform(rng::Stream::Success, 0, slot) < service_rate;
        const auto d = q.end_slot(slot, delivered);
        if (!d) continue;
        if (++seen <= warmup_deliveries || !d->has_peak) continue;
        out.service_times.push_back(d->system_time);
        out.peaks.push_back(d->peak);
    }
    return out;
}

} // namespace agemap::sim
