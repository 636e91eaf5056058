#include "agemap/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "agemap/analytic.hpp"
#include "agemap/log.hpp"
#include "agemap/paoi.hpp"

namespace agemap::experiment {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::vector<double> linspace(double from, double to, std::size_t steps) {
    std::vector<double> v(steps);
    for (std::size_t i = 0; i < steps; ++i)
        v[i] = steps == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1);
    return v;
}

std::vector<double> logspace(double from, double to, std::size_t steps) {
    auto v = linspace(std::log10(from), std::log10(to), steps);
    for (auto& x : v) x = std::pow(10.0, x);
    return v;
}

std::vector<double> parse_grid(const json& j, const std::string& what) {
    if (j.is_array()) {
        std::vector<double> v;
        for (const auto& e : j) {
            if (!e.is_number()) throw SpecError(what + ": grid entries must be numbers");
            v.push_back(e.get<double>());
        }
        return v;
    }
    if (j.is_object()) {
        if (!j.contains("from") || !j.contains("to") || !j.contains("steps"))
            throw SpecError(what + ": range needs from, to and steps");
        const double from = j.at("from").get<double>();
        const double to = j.at("to").get<double>();
        const auto steps = j.at("steps").get<std::size_t>();
        if (steps == 0) throw SpecError(what + ": steps must be positive");
        const std::string scale = j.value("scale", "linear");
        if (scale == "linear") return linspace(from, to, steps);
        if (scale == "log") {
            if (!(from > 0.0 && to > 0.0)) throw SpecError(what + ": log range needs positive bounds");
            return logspace(from, to, steps);
        }
        throw SpecError(what + ": unknown scale '" + scale + "'");
    }
    throw SpecError(what + ": expected an array or a {from, to, steps} object");
}

void check_increasing(const std::vector<double>& v, const std::string& what) {
    if (v.empty()) throw SpecError(what + " is empty");
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw SpecError(what + " must be strictly increasing");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& what) {
    if (!j.is_object()) throw SpecError(what + " must be an object");
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k)) throw SpecError(what + ": unknown key '" + k + "'");
}

std::string param_key(Param p, bool db) {
    if (p == Param::Beta && db) return "beta_db";
    return to_string(p);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

BaseParams parse_base(const json& j, const std::string& what) {
    check_keys(j, {"lambda_sd", "R", "link_distance", "alpha", "beta", "xi", "lambda_a"}, what);
    BaseParams b;
    if (j.contains("lambda_sd")) b.lambda_sd = j.at("lambda_sd").get<double>();
    if (j.contains("R")) b.link_distance = j.at("R").get<double>();
    if (j.contains("link_distance")) b.link_distance = j.at("link_distance").get<double>();
    if (j.contains("alpha")) b.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) b.beta = parse_beta(j.at("beta"));
    if (j.contains("xi")) b.xi = j.at("xi").get<double>();
    if (j.contains("lambda_a")) b.lambda_a = j.at("lambda_a").get<double>();
    return b;
}

bool base_has(const json& j, Param p) {
    switch (p) {
    case Param::Beta: return j.contains("beta");
    case Param::Xi: return j.contains("xi");
    case Param::LambdaA: return j.contains("lambda_a");
    case Param::LambdaSd: return j.contains("lambda_sd");
    case Param::R: return j.contains("R") || j.contains("link_distance");
    case Param::Alpha: return j.contains("alpha");
    case Param::None: return false;
    }
    return false;
}

} // namespace

std::string to_string(Param p) {
    switch (p) {
    case Param::None: return "none";
    case Param::Beta: return "beta";
    case Param::Xi: return "xi";
    case Param::LambdaA: return "lambda_a";
    case Param::LambdaSd: return "lambda_sd";
    case Param::R: return "R";
    case Param::Alpha: return "alpha";
    }
    return "?";
}

std::string to_string(Output o) {
    switch (o) {
    case Output::P1: return "p1";
    case Output::StdDev: return "std";
    case Output::Cdf: return "cdf";
    case Output::ActivityCdf: return "activity_cdf";
    }
    return "?";
}

Param parse_param(const std::string& s) {
    if (s == "beta" || s == "beta_db") return Param::Beta;
    if (s == "xi") return Param::Xi;
    if (s == "lambda_a") return Param::LambdaA;
    if (s == "lambda_sd") return Param::LambdaSd;
    if (s == "R" || s == "link_distance") return Param::R;
    if (s == "alpha") return Param::Alpha;
    if (s == "none") return Param::None;
    throw SpecError("unknown parameter '" + s + "'");
}

Output parse_output(const std::string& s) {
    if (s == "p1" || s == "mean") return Output::P1;
    if (s == "std" || s == "std_dev") return Output::StdDev;
    if (s == "cdf") return Output::Cdf;
    if (s == "activity_cdf") return Output::ActivityCdf;
    throw SpecError("unknown output '" + s + "'");
}

double parse_beta(const std::string& s) {
    std::string t;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    bool db = false;
    if (t.size() > 2) {
        std::string tail = t.substr(t.size() - 2);
        std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
        if (tail == "db") {
            db = true;
            t.resize(t.size() - 2);
        }
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw SpecError("cannot parse SIR threshold '" + s + "'");
    }
    if (used != t.size()) throw SpecError("cannot parse SIR threshold '" + s + "'");
    return db ? db_to_linear(v) : v;
}

double parse_beta(const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_beta(v.get<std::string>());
    throw SpecError("SIR threshold must be a number or a string such as \"3dB\"");
}

double BaseParams::get(Param p) const {
    switch (p) {
    case Param::Beta: return beta;
    case Param::Xi: return xi;
    case Param::LambdaA: return lambda_a;
    case Param::LambdaSd: return lambda_sd;
    case Param::R: return link_distance;
    case Param::Alpha: return alpha;
    case Param::None: break;
    }
    throw std::logic_error("BaseParams::get: no parameter");
}

void BaseParams::set(Param p, double v) {
    switch (p) {
    case Param::Beta: beta = v; return;
    case Param::Xi: xi = v; return;
    case Param::LambdaA: lambda_a = v; return;
    case Param::LambdaSd: lambda_sd = v; return;
    case Param::R: link_distance = v; return;
    case Param::Alpha: alpha = v; return;
    case Param::None: return;
    }
}

NetworkParams BaseParams::network() const { return {lambda_sd, link_distance, alpha, beta, xi}; }
TrafficParams BaseParams::traffic() const { return TrafficParams(lambda_a); }

void ExperimentSpec::validate() const {
    if (name.empty()) throw SpecError("spec: name is empty");
    if (name.find_first_of("/\\") != std::string::npos) throw SpecError("spec: name must not contain path separators");
    if (outputs.empty()) throw SpecError("spec: no outputs requested");
    if (disciplines.empty()) throw SpecError("spec: no disciplines");
    const bool needs_sweep = std::any_of(outputs.begin(), outputs.end(),
                                         [](Output o) { return o == Output::P1 || o == Output::StdDev; });
    if (needs_sweep && sweep == Param::None) throw SpecError("spec: p1/std outputs need a swept parameter");
    if (sweep != Param::None) check_increasing(grid, "sweep grid");
    if (series != Param::None) {
        if (series == sweep) throw SpecError("spec: series parameter equals the swept parameter");
        if (series_values.empty()) throw SpecError("spec: series has no values");
    }
    if (std::count(outputs.begin(), outputs.end(), Output::Cdf)) check_increasing(cdf_grid, "cdf_grid");
    if (std::count(outputs.begin(), outputs.end(), Output::ActivityCdf)) check_increasing(activity_grid, "activity_grid");
    if (simulation.realizations == 0) throw SpecError("spec: simulation.realizations must be positive");
    if (simulation.measure_slots == 0) throw SpecError("spec: simulation.measure_slots must be positive");

    // Every grid combination must form valid parameters.
    auto resolve = [&](Param p, double v) { return p == Param::Beta && beta_grid_db ? db_to_linear(v) : v; };
    const std::vector<double> sv = series == Param::None ? std::vector<double>{0.0} : series_values;
    const std::vector<double> gv = sweep == Param::None ? std::vector<double>{0.0} : grid;
    for (double s : sv)
        for (double g : gv) {
            BaseParams b = fixed;
            b.set(series, resolve(series, s));
            b.set(sweep, resolve(sweep, g));
            try {
                (void)b.network();
                (void)b.traffic();
            } catch (const std::invalid_argument& e) {
                throw SpecError(std::string("spec: invalid parameter combination: ") + e.what());
            }
        }
}

nlohmann::ordered_json ExperimentSpec::to_json() const {
    ojson j;
    j["name"] = name;
    ojson f;
    f["lambda_sd"] = fixed.lambda_sd;
    f["R"] = fixed.link_distance;
    f["alpha"] = fixed.alpha;
    f["beta"] = fixed.beta;
    f["xi"] = fixed.xi;
    f["lambda_a"] = fixed.lambda_a;
    for (Param p : {sweep, series}) {
        if (p == Param::None) continue;
        f.erase(p == Param::R ? "R" : to_string(p));
    }
    j["fixed"] = f;
    if (sweep != Param::None) j["sweep"] = {{"param", param_key(sweep, beta_grid_db)}, {"grid", grid}};
    if (series != Param::None) j["series"] = {{"param", param_key(series, beta_grid_db)}, {"values", series_values}};
    auto d = ojson::array();
    for (auto x : disciplines) d.push_back(std::string(agemap::to_string(x)));
    j["disciplines"] = d;
    auto o = ojson::array();
    for (auto x : outputs) o.push_back(to_string(x));
    j["outputs"] = o;
    if (!cdf_grid.empty()) j["cdf_grid"] = cdf_grid;
    if (!activity_grid.empty()) j["activity_grid"] = activity_grid;
    ojson s;
    s["enabled"] = simulation.enabled;
    if (simulation.window_side) s["window_side"] = *simulation.window_side;
    s["warmup_slots"] = simulation.warmup_slots;
    s["measure_slots"] = simulation.measure_slots;
    s["realizations"] = simulation.realizations;
    s["min_deliveries"] = simulation.min_deliveries;
    j["simulation"] = s;
    j["seed"] = seed;
    return j;
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& in) {
    const json& j = in.contains("spec") ? in.at("spec") : in;
    try {
        check_keys(j, {"name", "fixed", "sweep", "series", "disciplines", "outputs", "cdf_grid", "activity_grid",
                       "simulation", "seed"},
                   "spec");
        ExperimentSpec s;
        s.name = j.value("name", std::string("experiment"));
        const json fixed = j.value("fixed", json::object());
        s.fixed = parse_base(fixed, "fixed");
        auto read_axis = [&](const json& a, const char* values_key, Param& p, std::vector<double>& v,
                             const std::string& what) {
            check_keys(a, {"param", values_key}, what);
            const auto key = a.at("param").get<std::string>();
            p = parse_param(key);
            if (p == Param::None) throw SpecError(what + ": param must name a parameter");
            if (p == Param::Beta) {
                s.beta_grid_db = key == "beta_db";
            }
            if (base_has(fixed, p)) throw SpecError(what + ": '" + key + "' is also given in fixed");
            v = parse_grid(a.at(values_key), what);
        };
        if (j.contains("sweep")) read_axis(j.at("sweep"), "grid", s.sweep, s.grid, "sweep");
        if (j.contains("series")) read_axis(j.at("series"), "values", s.series, s.series_values, "series");
        if (j.contains("disciplines")) {
            s.disciplines.clear();
            for (const auto& d : j.at("disciplines")) s.disciplines.push_back(parse_discipline(d.get<std::string>()));
        }
        if (j.contains("outputs")) {
            s.outputs.clear();
            for (const auto& o : j.at("outputs")) s.outputs.push_back(parse_output(o.get<std::string>()));
        }
        if (j.contains("cdf_grid")) s.cdf_grid = parse_grid(j.at("cdf_grid"), "cdf_grid");
        if (j.contains("activity_grid")) s.activity_grid = parse_grid(j.at("activity_grid"), "activity_grid");
        if (j.contains("simulation")) {
            const auto& sj = j.at("simulation");
            check_keys(sj, {"enabled", "window_side", "warmup_slots", "measure_slots", "realizations", "min_deliveries"},
                       "simulation");
            s.simulation.enabled = sj.value("enabled", true);
            if (sj.contains("window_side")) s.simulation.window_side = sj.at("window_side").get<double>();
            s.simulation.warmup_slots = sj.value("warmup_slots", s.simulation.warmup_slots);
            s.simulation.measure_slots = sj.value("measure_slots", s.simulation.measure_slots);
            s.simulation.realizations = sj.value("realizations", s.simulation.realizations);
            s.simulation.min_deliveries = sj.value("min_deliveries", s.simulation.min_deliveries);
        }
        s.seed = j.value("seed", s.seed);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw SpecError(std::string("spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        if (dynamic_cast<const SpecError*>(&e)) throw;
        throw SpecError(std::string("spec: ") + e.what());
    }
}

std::vector<std::string> preset_names() { return {"fig3", "fig4", "fig5", "fig6", "fig7", "fig8"}; }

ExperimentSpec preset(const std::string& name) {
    ExperimentSpec s;
    s.name = name;
    if (name == "fig3") {
        s.fixed.lambda_a = 0.1;
        s.fixed.xi = 0.5;
        s.fixed.beta = 2.0;
        s.fixed.alpha = 4.0;
        s.fixed.link_distance = 10.0;
        s.series = Param::LambdaSd;
        s.series_values = {1e-4, 1e-3};
        s.disciplines = {Discipline::NonPreemptive};
        s.outputs = {Output::ActivityCdf};
        s.activity_grid = linspace(0.01, 0.5, 50);
        s.simulation.enabled = true;
        s.simulation.realizations = 2;
    } else if (name == "fig4") {
        s.sweep = Param::R;
        s.grid = {10.0, 15.0, 20.0};
        s.outputs = {Output::P1, Output::Cdf};
        s.cdf_grid = linspace(2.0, 60.0, 117);
        s.simulation.enabled = true;
    } else if (name == "fig5") {
        s.fixed.link_distance = 10.0;
        s.sweep = Param::Beta;
        s.beta_grid_db = true;
        s.grid = linspace(-5.0, 15.0, 21);
        s.series = Param::Alpha;
        s.series_values = {3.5};
        s.outputs = {Output::P1, Output::StdDev};
    } else if (name == "fig6") {
        s.sweep = Param::Xi;
        s.grid = linspace(0.05, 1.0, 20);
        s.series = Param::R;
        s.series_values = {10.0, 20.0};
        s.outputs = {Output::P1, Output::StdDev};
    } else if (name == "fig7") {
        s.sweep = Param::LambdaA;
        s.grid = linspace(0.05, 1.0, 20);
        s.series = Param::R;
        s.series_values = {10.0, 20.0};
        s.outputs = {Output::P1, Output::StdDev};
    } else if (name == "fig8") {
        s.sweep = Param::LambdaSd;
        s.grid = logspace(1e-4, 1e-2, 13);
        s.series = Param::Xi;
        s.series_values = {0.1, 0.3, 0.5};
        s.outputs = {Output::P1};
    } else {
        throw SpecError("unknown preset '" + name + "'");
    }
    s.validate();
    return s;
}

std::string config_hash(const ExperimentSpec& spec) { return hex64(fnv1a(spec.to_json().dump())); }

namespace {

struct PointRows {
    std::map<Output, std::vector<std::string>> rows;
};

std::string series_label(const ExperimentSpec& spec, double v) {
    if (spec.series == Param::None) return "all";
    return param_key(spec.series, spec.beta_grid_db) + "=" + fmt(v);
}

PointRows compute_point(const ExperimentSpec& spec, double series_value, double sweep_value) {
    auto resolve = [&](Param p, double v) { return p == Param::Beta && spec.beta_grid_db ? db_to_linear(v) : v; };
    BaseParams b = spec.fixed;
    b.set(spec.series, resolve(spec.series, series_value));
    b.set(spec.sweep, resolve(spec.sweep, sweep_value));
    const auto params = b.network();
    const auto traffic = b.traffic();
    const auto label = series_label(spec, series_value);
    const auto curve = spec.sweep == Param::None ? label
                                                 : label + ";" + param_key(spec.sweep, spec.beta_grid_db) + "=" +
                                                       fmt(sweep_value);

    std::optional<analytic::TwoStepAnalysis> analysis;
    try {
        analysis = analytic::analyze_two_step(params, traffic);
    } catch (const std::exception& e) {
        log::warn("experiment " + spec.name + " (" + curve + "): analysis failed: " + e.what());
    }

    auto has = [&](Output o) { return std::count(spec.outputs.begin(), spec.outputs.end(), o) > 0; };
    auto sim_config = [&](Discipline d, sim::SimMode mode) {
        auto cfg = sim::SimConfig::with_defaults(params, traffic, d);
        if (spec.simulation.window_side) cfg.window_side = *spec.simulation.window_side;
        cfg.warmup_slots = spec.simulation.warmup_slots;
        cfg.measure_slots = spec.simulation.measure_slots;
        cfg.min_deliveries = spec.simulation.min_deliveries;
        cfg.seed = spec.seed;
        cfg.mode = mode;
        return cfg;
    };

    PointRows out;
    if (has(Output::P1) || has(Output::StdDev) || has(Output::Cdf)) {
        std::optional<paoi::SpatialModel> model;
        if (analysis) model = paoi::SpatialModel::from_analysis(*analysis, traffic, true);
        for (auto disc : spec.disciplines) {
            const std::string dname(agemap::to_string(disc));
            double p1 = kNaN, sd = kNaN;
            if (model) {
                try {
                    const auto mom = paoi::paoi_moments(disc, *model);
                    p1 = mom.p1;
                    sd = mom.std_dev();
                } catch (const std::exception& e) {
                    log::warn("experiment " + spec.name + " (" + curve + "): moments failed: " + e.what());
                }
            }
            std::optional<sim::SpatialSummary> summary;
            if (spec.simulation.enabled)
                summary = sim::run_replicated(sim_config(disc, sim::SimMode::Original), spec.simulation.realizations, 1);
            const std::string sweep_col = fmt(sweep_value);
            if (has(Output::P1)) {
                std::string row = label + "," + sweep_col + "," + dname + "," + fmt(p1) + ",";
                if (summary)
                    row += fmt(summary->spatial_mean()) + "," + fmt(summary->spatial_sem()) + "," +
                           std::to_string(summary->n_included());
                else
                    row += ",,";
                out.rows[Output::P1].push_back(row);
            }
            if (has(Output::StdDev)) {
                std::string row = label + "," + sweep_col + "," + dname + "," + fmt(sd) + ",";
                if (summary) {
                    const auto n = static_cast<double>(summary->n_included());
                    const double s = summary->spatial_sd();
                    row += fmt(s) + "," + fmt(n > 1 ? s / std::sqrt(2.0 * (n - 1.0)) : kNaN) + "," +
                           std::to_string(summary->n_included());
                } else {
                    row += ",,";
                }
                out.rows[Output::StdDev].push_back(row);
            }
            if (has(Output::Cdf)) {
                const auto means = summary ? summary->sorted_means() : std::vector<double>{};
                const double n = static_cast<double>(means.size());
                for (double x : spec.cdf_grid) {
                    double f = kNaN;
                    if (analysis) {
                        try {
                            f = paoi::cdf_mean_paoi(x, disc, analysis->step2_fit, params.xi(), traffic);
                        } catch (const std::exception& e) {
                            log::warn("experiment " + spec.name + ": cdf failed: " + e.what());
                        }
                    }
                    std::string row = curve + "," + fmt(x) + "," + dname + "," + fmt(f) + ",";
                    if (summary) {
                        const double fe =
                            static_cast<double>(std::upper_bound(means.begin(), means.end(), x) - means.begin()) / n;
                        row += fmt(fe) + "," + fmt(std::sqrt(fe * (1.0 - fe) / n)) + "," + std::to_string(means.size());
                    } else {
                        row += ",,";
                    }
                    out.rows[Output::Cdf].push_back(row);
                }
            }
        }
    }
    if (has(Output::ActivityCdf)) {
        std::optional<sim::SpatialSummary> summary;
        if (spec.simulation.enabled)
            summary = sim::run_replicated(sim_config(Discipline::NonPreemptive, sim::SimMode::DominantStep1),
                                          spec.simulation.realizations, 1);
        const auto acts = summary ? summary->sorted_activities() : std::vector<double>{};
        const double n = static_cast<double>(acts.size());
        for (double t : spec.activity_grid) {
            double f = kNaN;
            if (analysis) {
                if (t <= 0.0) f = 0.0;
                else if (t >= params.xi()) f = 1.0;
                else f = analytic::activity_cdf_dominant(t, params, traffic, analysis->step1_fit);
            }
            std::string row = curve + "," + fmt(t) + ",any," + fmt(f) + ",";
            if (summary) {
                const double fe = static_cast<double>(std::upper_bound(acts.begin(), acts.end(), t) - acts.begin()) / n;
                row += fmt(fe) + "," + fmt(std::sqrt(fe * (1.0 - fe) / n)) + "," + std::to_string(acts.size());
            } else {
                row += ",,";
            }
            out.rows[Output::ActivityCdf].push_back(row);
        }
    }
    return out;
}

std::string csv_header(const ExperimentSpec& spec, Output o) {
    switch (o) {
    case Output::P1:
    case Output::StdDev:
        return "series," + param_key(spec.sweep, spec.beta_grid_db) + ",discipline,analytic,simulated,sim_se,n_links";
    case Output::Cdf: return "series,x,discipline,analytic,simulated,sim_se,n_links";
    case Output::ActivityCdf: return "series,t,discipline,analytic,simulated,sim_se,n_links";
    }
    return "";
}

} // namespace

RunResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir, unsigned threads) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    const auto hash = config_hash(spec);

    const std::vector<double> sv = spec.series == Param::None ? std::vector<double>{0.0} : spec.series_values;
    const std::vector<double> gv = spec.sweep == Param::None ? std::vector<double>{0.0} : spec.grid;
    const std::size_t n_tasks = sv.size() * gv.size();
    std::vector<PointRows> results(n_tasks);
    std::vector<std::exception_ptr> errors(n_tasks);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_tasks));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n_tasks; i = next++) {
            try {
                results[i] = compute_point(spec, sv[i / gv.size()], gv[i % gv.size()]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunResult rr;
    rr.config_hash = hash;
    for (Output o : spec.outputs) {
        const auto path = out_dir / (spec.name + "_" + to_string(o) + ".csv");
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << "# config_hash=" << hash << "\n" << csv_header(spec, o) << "\n";
        for (const auto& r : results) {
            const auto it = r.rows.find(o);
            if (it == r.rows.end()) continue;
            for (const auto& line : it->second) f << line << "\n";
        }
        rr.files.push_back(path);
    }

    ojson m;
    m["name"] = spec.name;
    m["config_hash"] = hash;
    m["seed"] = spec.seed;
    auto files = ojson::array();
    for (const auto& p : rr.files) files.push_back(p.filename().string());
    m["outputs"] = files;
    m["spec"] = spec.to_json();
    rr.manifest = out_dir / (spec.name + "_manifest.json");
    std::ofstream mf(rr.manifest);
    if (!mf) throw std::runtime_error("cannot write " + rr.manifest.string());
    mf << m.dump(2) << "\n";
    return rr;
}

std::string query(const QueryRequest& req) {
    const auto params = req.params.network();
    const auto traffic = req.params.traffic();
    const auto analysis = analytic::analyze_two_step(params, traffic);
    const auto model = paoi::SpatialModel::from_analysis(analysis, traffic, !req.step1);
    const auto& law = req.step1 ? analysis.step1_fit : analysis.step2_fit;

    std::ostringstream os;
    auto line = [&os](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; };
    line("kind", req.kind);
    line("bound", req.step1 ? "step1" : "two-step");
    line("M1", fmt(model.moments(1)));
    line("M2", fmt(model.moments(2)));
    if (law.is_beta()) {
        line("kappa1", fmt(law.beta().kappa1));
        line("kappa2", fmt(law.beta().kappa2));
    } else {
        line("point_mass", fmt(law.point()));
    }
    line("pbar1_D", fmt(analysis.dominant.moment(1)));

    if (req.kind == "moment") {
        const double za = traffic.z_a();
        const double xi = params.xi();
        const double mm1 = model.moments(-1);
        line("discipline", std::string(to_string(req.discipline)));
        line("Z_a", fmt(za));
        line("M_-1", fmt(mm1));
        if (req.b == 1) {
            if (req.discipline == Discipline::NonPreemptive) {
                line("2/xi*M_-1", fmt(2.0 * mm1 / xi));
            } else {
                line("M_-1/xi", fmt(mm1 / xi));
                line("S(1;0)", fmt(paoi::s_nm(1, 0, model)));
            }
        }
        if (req.b == 2) {
            const auto mom = paoi::paoi_moments(req.discipline, model);
            line("M_-2", fmt(model.moments(-2)));
            line("P1", fmt(mom.p1));
            line("variance", fmt(mom.variance()));
            line("std_dev", fmt(mom.std_dev()));
        }
        line("P" + std::to_string(req.b), fmt(paoi::moment_paoi(req.b, req.discipline, model)));
    } else if (req.kind == "cdf") {
        line("discipline", std::string(to_string(req.discipline)));
        line("x", fmt(req.x));
        line("F", fmt(paoi::cdf_mean_paoi(req.x, req.discipline, law, params.xi(), traffic)));
    } else if (req.kind == "meta") {
        line("x", fmt(req.x));
        line("D", fmt(req.x <= 0.0 ? 1.0 : law.ccdf(std::min(req.x, 1.0))));
    } else if (req.kind == "activity") {
        line("m", std::to_string(req.m));
        line("pbar_m_D", fmt(analysis.dominant.moment(req.m)));
        line("xi^m", fmt(std::pow(params.xi(), req.m)));
    } else {
        throw std::invalid_argument("unknown query kind '" + req.kind + "' (moment, cdf, meta, activity)");
    }
    return os.str();
}

sim::SimConfig sim_config_from_json(const nlohmann::json& j, unsigned* realizations) {
    try {
        check_keys(j,
                   {"name", "lambda_sd", "R", "link_distance", "alpha", "beta", "xi", "lambda_a", "discipline", "mode",
                    "fading", "window_side", "warmup_slots", "measure_slots", "seed", "min_deliveries", "realizations",
                    "trace_link"},
                   "simulation config");
        json base = json::object();
        for (const char* k : {"lambda_sd", "R", "link_distance", "alpha", "beta", "xi", "lambda_a"})
            if (j.contains(k)) base[k] = j.at(k);
        const BaseParams b = parse_base(base, "simulation config");
        const auto disc = parse_discipline(j.value("discipline", std::string("np")));
        auto cfg = sim::SimConfig::with_defaults(b.network(), b.traffic(), disc);
        if (j.contains("mode")) cfg.mode = sim::parse_mode(j.at("mode").get<std::string>());
        if (j.contains("fading")) cfg.fading = sim::parse_fading(j.at("fading").get<std::string>());
        cfg.window_side = j.value("window_side", cfg.window_side);
        cfg.warmup_slots = j.value("warmup_slots", cfg.warmup_slots);
        cfg.measure_slots = j.value("measure_slots", cfg.measure_slots);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.min_deliveries = j.value("min_deliveries", cfg.min_deliveries);
        if (j.contains("trace_link")) cfg.trace_link = j.at("trace_link").get<std::size_t>();
        if (realizations) *realizations = j.value("realizations", 1u);
        (void)cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw SpecError(std::string("simulation config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        if (dynamic_cast<const SpecError*>(&e)) throw;
        throw SpecError(std::string("simulation config: ") + e.what());
    }
}

SimulateResult simulate(const nlohmann::json& config, std::optional<std::uint64_t> seed,
                        const std::filesystem::path& out_dir, bool per_link) {
    unsigned realizations = 1;
    auto cfg = sim_config_from_json(config, &realizations);
    if (seed) cfg.seed = *seed;
    if (realizations == 0) throw SpecError("simulation config: realizations must be positive");
    json resolved = config;
    resolved["seed"] = cfg.seed;
    const auto hash = hex64(fnv1a(resolved.dump()));
    const std::string name = config.value("name", std::string("simulation"));

    SimulateResult r;
    r.summary = sim::run_replicated(cfg, realizations);
    std::filesystem::create_directories(out_dir);

    auto j = ojson::parse(r.summary.to_json(per_link, -1));
    ojson top;
    top["config_hash"] = hash;
    top["config"] = resolved;
    top["window_side"] = cfg.window_side;
    top["realizations"] = realizations;
    for (auto& [k, v] : j.items()) top[k] = v;
    if (r.summary.trace) {
        const auto check = sim::paoi_identity_check(*r.summary.trace);
        top["trace_identity"] = {{"ok", check.ok}, {"checked", check.checked}, {"diagnostic", check.diagnostic}};
    }
    r.json_path = out_dir / (name + "_summary.json");
    std::ofstream jf(r.json_path);
    if (!jf) throw std::runtime_error("cannot write " + r.json_path.string());
    jf << top.dump(2) << "\n";

    r.ecdf_path = out_dir / (name + "_ecdf.csv");
    std::ofstream cf(r.ecdf_path);
    if (!cf) throw std::runtime_error("cannot write " + r.ecdf_path.string());
    cf << "# config_hash=" << hash << "\n";
    r.summary.write_ecdf_csv(cf);
    return r;
}

} // namespace agemap::experiment
