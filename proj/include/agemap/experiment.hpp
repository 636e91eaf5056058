#pragma once

// Experiment runner: parameter sweeps producing CSV tables, ad-hoc analytic
// queries and standalone simulation runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agemap/model.hpp"
#include "agemap/simulator.hpp"

namespace agemap::experiment {

/// Raised for malformed or inconsistent specifications before any work starts.
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Param { None, Beta, Xi, LambdaA, LambdaSd, R, Alpha };
enum class Output { P1, StdDev, Cdf, ActivityCdf };

std::string to_string(Param p);
std::string to_string(Output o);
Param parse_param(const std::string& s);
Output parse_output(const std::string& s);

/// Parses a threshold: a JSON number is linear, a string such as "3dB" or
/// "-5 dB" is in decibels, a plain numeric string is linear.
double parse_beta(const nlohmann::json& v);
double parse_beta(const std::string& s);

struct BaseParams {
    double lambda_sd = 1e-3;
    double link_distance = 15.0;
    double alpha = 4.0;
    double beta = 1.9952623149688795;  // 3 dB
    double xi = 0.5;
    double lambda_a = 0.3;

    double get(Param p) const;
    void set(Param p, double v);
    NetworkParams network() const;
    TrafficParams traffic() const;
};

struct SimSettings {
    bool enabled = false;
    std::optional<double> window_side;
    std::uint64_t warmup_slots = 2000;
    std::uint64_t measure_slots = 20000;
    unsigned realizations = 1;
    std::uint64_t min_deliveries = 50;
};

struct ExperimentSpec {
    std::string name;
    BaseParams fixed;
    /// Swept parameter and its grid. Beta grids are in dB when beta_grid_db.
    Param sweep = Param::None;
    std::vector<double> grid;
    bool beta_grid_db = true;
    /// Optional family of curves, one per value (beta values in dB when beta_grid_db).
    Param series = Param::None;
    std::vector<double> series_values;
    std::vector<Discipline> disciplines{Discipline::NonPreemptive, Discipline::Preemptive};
    std::vector<Output> outputs{Output::P1};
    /// Abscissae of the cdf (conditional mean PAoI) and activity_cdf outputs.
    std::vector<double> cdf_grid;
    std::vector<double> activity_grid;
    SimSettings simulation;
    std::uint64_t seed = 1;

    /// Throws SpecError.
    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Accepts a spec object or a run manifest (which embeds one under "spec").
    static ExperimentSpec from_json(const nlohmann::json& j);
};

std::vector<std::string> preset_names();
/// Throws SpecError for an unknown name.
ExperimentSpec preset(const std::string& name);

/// FNV-1a 64-bit hash of the canonical JSON of the spec, hex encoded.
std::string config_hash(const ExperimentSpec& spec);

struct RunResult {
    std::string config_hash;
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
};

/// Writes <name>_<output>.csv per requested output and <name>_manifest.json.
RunResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir, unsigned threads = 0);

struct QueryRequest {
    std::string kind;  ///< moment, cdf, meta, activity
    BaseParams params;
    Discipline discipline = Discipline::NonPreemptive;
    unsigned b = 1;
    double x = 0.0;
    unsigned m = 1;
    bool step1 = false;  ///< use the saturated (step-1) law instead of the two-step one
};

/// Human-readable key = value report of the requested quantity and the
/// intermediate values it was derived from.
std::string query(const QueryRequest& req);

/// Standalone simulation config: network/traffic parameters plus SimConfig
/// fields, all optional except where the defaults do not apply.
sim::SimConfig sim_config_from_json(const nlohmann::json& j, unsigned* realizations = nullptr);

struct SimulateResult {
    sim::SpatialSummary summary;
    std::filesystem::path json_path;
    std::filesystem::path ecdf_path;
};

SimulateResult simulate(const nlohmann::json& config, std::optional<std::uint64_t> seed,
                        const std::filesystem::path& out_dir, bool per_link);

} // namespace agemap::experiment
