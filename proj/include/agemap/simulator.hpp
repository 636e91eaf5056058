#pragma once

// Slot-level Monte Carlo of the coupled zero-buffer queues of a Poisson
// bipolar network on a torus.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agemap/model.hpp"

namespace agemap::sim {

enum class SimMode {
    Original,       ///< links transmit only when they hold an update
    DominantStep1,  ///< every link transmits with probability xi, dummy packets when idle
    SingleLink,     ///< no interference
};

/// How a slot's SIR test is sampled.
enum class FadingModel {
    /// Success drawn with probability prod_x clear(x) over the active
    /// interferers; equal in law to drawing fresh exponential gains because
    /// the gains are independent across links, pairs and slots.
    ConditionalProduct,
    /// Explicit unit-mean exponential gains for every link pair and slot.
    ExplicitGains,
};

std::string_view to_string(SimMode m) noexcept;
std::string_view to_string(FadingModel f) noexcept;
SimMode parse_mode(std::string_view s);
FadingModel parse_fading(std::string_view s);

struct SimConfig {
    NetworkParams network;
    TrafficParams traffic;
    Discipline discipline = Discipline::NonPreemptive;
    double window_side = 1000.0;
    std::uint64_t warmup_slots = 2000;
    std::uint64_t measure_slots = 20000;
    std::uint64_t seed = 1;
    SimMode mode = SimMode::Original;
    FadingModel fading = FadingModel::ConditionalProduct;
    /// Links with fewer recorded peaks are reported but left out of the
    /// spatial statistics.
    std::uint64_t min_deliveries = 50;
    /// Keep the full delivery log of this link (for identity checks).
    std::optional<std::size_t> trace_link;

    /// max(1000 m, sqrt(500 / lambda_sd)).
    static double default_window(double lambda_sd);
    static SimConfig with_defaults(const NetworkParams& network, const TrafficParams& traffic,
                                   Discipline discipline = Discipline::NonPreemptive);

    /// Throws std::invalid_argument on unusable settings. Returns soft
    /// warnings (too few expected links, warm-up shorter than 10 / lambda_a).
    std::vector<std::string> validate() const;
};

struct Point {
    double x;
    double y;
};

struct Realization {
    double window_side;
    std::vector<Point> sources;
    std::vector<Point> destinations;
    /// Geometry attempts needed to draw a nonempty network.
    std::uint64_t attempts = 1;

    std::size_t size() const noexcept { return sources.size(); }
    /// Wrap-around distance on the square torus of side window_side.
    double distance(const Point& a, const Point& b) const noexcept;
};

/// Poisson(lambda_sd W^2) sources uniform on the window, each destination at
/// distance R in a uniform direction (wrapped onto the torus). An empty draw
/// is redrawn with the next geometry counter.
Realization generate_network(const SimConfig& cfg);

/// Zero-buffer queue of one link with its age process.
class LinkQueue {
public:
    explicit LinkQueue(Discipline discipline) : discipline_(discipline) {}

    struct Delivery {
        std::uint64_t system_time;  ///< slots the delivered update spent at the source
        std::uint64_t peak;         ///< age just before the reset; valid when has_peak
        bool has_peak;
    };

    /// Update arrival at the start of `slot`. Non-preemptive drops it when
    /// busy; preemptive replaces the update in service. Returns true when the
    /// arrival is the update now in service.
    bool arrive(std::uint64_t slot);
    bool busy() const noexcept { return busy_; }
    /// End of `slot`; `delivered` must only be true while busy.
    std::optional<Delivery> end_slot(std::uint64_t slot, bool delivered);
    /// Current age; meaningful once has_age().
    std::uint64_t age() const noexcept { return age_; }
    bool has_age() const noexcept { return has_age_; }
    std::uint64_t birth_slot() const noexcept { return birth_; }

private:
    Discipline discipline_;
    bool busy_ = false;
    bool has_age_ = false;
    std::uint64_t birth_ = 0;
    std::uint64_t age_ = 0;
};

/// Delivery log of one link. peaks[k] is the age recorded just before the
/// k-th delivery (0 for the first delivery, which has no defined peak).
struct LinkTrace {
    std::vector<std::uint64_t> delivery_slots;
    std::vector<std::uint64_t> birth_slots;
    std::vector<std::uint64_t> peaks;
};

/// Replays one link given per-slot arrival flags and per-slot flags telling
/// whether a transmission in that slot would succeed.
LinkTrace replay_link(Discipline discipline, const std::vector<bool>& arrivals, const std::vector<bool>& succeeds);

struct IdentityCheck {
    bool ok = true;
    std::size_t checked = 0;
    std::optional<std::size_t> first_mismatch;
    std::string diagnostic;
};

/// Checks that every peak recorded from the age process equals the
/// system time of the previous delivered update plus the inter-delivery time.
IdentityCheck paoi_identity_check(const LinkTrace& trace);

struct LinkStats {
    std::uint64_t realization = 0;
    std::uint64_t index = 0;
    std::uint64_t peaks = 0;
    double sum_peaks = 0.0;
    double sum_sq_peaks = 0.0;
    std::uint64_t attempts = 0;
    std::uint64_t successes = 0;
    std::uint64_t busy_slots = 0;
    std::uint64_t measured_slots = 0;
    double xi = 1.0;

    double mean_paoi() const noexcept;
    /// Naive standard error of the temporal mean (peaks treated as i.i.d.).
    double sem() const noexcept;
    double mu_hat() const noexcept;
    double busy_fraction() const noexcept;
    /// xi times the busy fraction: probability of a real transmission.
    double activity() const noexcept;
    double tx_fraction() const noexcept;
};

struct SpatialSummary {
    SimMode mode = SimMode::Original;
    Discipline discipline = Discipline::NonPreemptive;
    std::uint64_t seed = 0;
    std::uint64_t min_deliveries = 0;
    std::vector<LinkStats> links;          ///< every link, in realization/index order
    std::vector<std::uint64_t> service_time_histogram;  ///< [m] = deliveries with system time m; last bin is overflow
    std::optional<LinkTrace> trace;

    bool included(const LinkStats& l) const noexcept { return l.peaks >= min_deliveries && l.peaks > 0; }
    std::size_t n_included() const noexcept;
    std::size_t n_excluded() const noexcept { return links.size() - n_included(); }
    /// Per-link temporal mean PAoI of the included links, ascending.
    std::vector<double> sorted_means() const;
    double spatial_mean() const;
    double spatial_sd() const;
    /// Standard error of spatial_mean.
    double spatial_sem() const;
    /// Empirical CDF of the per-link mean PAoI at x.
    double ecdf(double x) const;
    /// Activities of every link, ascending.
    std::vector<double> sorted_activities() const;

    /// Concatenates summaries (associative; order given by the argument order).
    static SpatialSummary merge(const std::vector<SpatialSummary>& parts);

    std::string to_json(bool per_link, int indent = 2) const;
    /// Columns: x, F_hat, n_links.
    void write_ecdf_csv(std::ostream& out) const;
};

SpatialSummary run(const SimConfig& cfg);
SpatialSummary run(const SimConfig& cfg, const Realization& net);
/// Independent realizations seeded cfg.seed, cfg.seed + 1, ...; executed in
/// parallel and merged in seed order.
SpatialSummary run_replicated(const SimConfig& cfg, unsigned realizations, unsigned threads = 0);

/// Per-link success frequency of a receiver that transmits every slot while
/// interferer x is on with probability activities[x], independently per slot.
std::vector<double> empirical_success_prob(const Realization& net, std::span<const double> activities,
                                           const NetworkParams& params, std::uint64_t slots, std::uint64_t seed,
                                           FadingModel fading = FadingModel::ExplicitGains);

/// The matching product formula on the same realization and activities.
std::vector<double> product_success_prob(const Realization& net, std::span<const double> activities,
                                         const NetworkParams& params);

struct SingleQueueResult {
    std::vector<std::uint64_t> service_times;
    std::vector<std::uint64_t> peaks;
};

/// One queue served with fixed per-slot delivery probability `service_rate`.
/// Records `episodes` deliveries after `warmup_deliveries`.
SingleQueueResult simulate_single_queue(Discipline discipline, double lambda_a, double service_rate,
                                        std::uint64_t episodes, std::uint64_t seed,
                                        std::uint64_t warmup_deliveries = 10);

} // namespace agemap::sim
