// SPDX-License-Identifier: Apache-2.0
#include "impdr/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "impdr/errors.hpp"

namespace impdr::config {

using nlohmann::json;

namespace {

/// A JSON object plus its dotted path; every key read is marked so leftovers
/// can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path, const std::string& source)
        : j_(j), path_(std::move(path)), source_(source) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    [[nodiscard]] std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        throw ConfigError(source_, field, what);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    Section section(const std::string& key) { return {raw(key), field(key), source_}; }

    std::vector<Section> list(const std::string& key) {
        const auto& arr = raw(key);
        if (!arr.is_array()) fail(field(key), "expected a list");
        std::vector<Section> out;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            out.emplace_back(arr[i], field(key) + "[" + std::to_string(i) + "]", source_);
        }
        return out;
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_number()) fail(field(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) fail(field(key), "must be finite");
    }

    void integer(const std::string& key, int& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_number_integer()) fail(field(key), "expected an integer");
        out = v.get<int>();
    }

    void seed(const std::string& key, std::uint64_t& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_number_unsigned()) fail(field(key), "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_boolean()) fail(field(key), "expected true or false");
        out = v.get<bool>();
    }

    void string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_string()) fail(field(key), "expected a string");
        out = v.get<std::string>();
    }

    /// [x, y]
    Vec2 point(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            fail(field(key), "expected [x, y]");
        }
        return {v[0].get<double>(), v[1].get<double>()};
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) fail(field(item.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    const std::string& source_;
    std::set<std::string> seen_;
};

DriftParams read_drift(Section s) {
    DriftParams d;
    s.number("amplitude", d.amplitude);
    s.number("angular_velocity", d.angular_velocity);
    s.number("drift_velocity", d.drift_velocity);
    s.finish();
    return d;
}

Target read_target(Section& s) {
    Target t;
    t.base = s.point("position");
    if (s.has("drift_x")) t.drift_x = read_drift(s.section("drift_x"));
    if (s.has("drift_y")) t.drift_y = read_drift(s.section("drift_y"));
    return t;
}

json drift_json(const DriftParams& d) {
    return {{"amplitude", d.amplitude}, {"angular_velocity", d.angular_velocity},
            {"drift_velocity", d.drift_velocity}};
}

/// Runs a validation step and reports its message against `field`.
template <typename F>
void check(const Section& s, const std::string& field, F&& f) {
    try {
        f();
    } catch (const ContractError& e) {
        s.fail(field, e.what());
    } catch (const InputError& e) {
        s.fail(field, e.what());
    }
}

}  // namespace

sim::ScenarioConfig parse_scenario(std::string_view text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source, "", std::string("invalid JSON: ") + e.what());
    }
    Section root(doc, "", source);

    if (!root.has("schema_version")) root.fail("schema_version", "missing");
    int version = 0;
    root.integer("schema_version", version);
    if (version != 1) root.fail("schema_version", "unsupported version " + std::to_string(version));

    sim::ScenarioConfig c;
    if (root.has("scenario")) {
        std::string name;
        root.string("scenario", name);
        int a = 0, b = 0;
        if (root.has("scenario_args")) {
            const auto& args = root.raw("scenario_args");
            if (!args.is_array() || args.size() > 2) root.fail("scenario_args", "expected up to two integers");
            for (const auto& v : args) {
                if (!v.is_number_integer()) root.fail("scenario_args", "expected up to two integers");
            }
            if (!args.empty()) a = args[0].get<int>();
            if (args.size() > 1) b = args[1].get<int>();
        }
        check(root, "scenario", [&] { c = sim::scenario_library(name, a, b); });
    } else {
        c = sim::default_scenario();
    }

    root.string("name", c.name);
    if (root.has("seed")) {
        root.seed("seed", c.seed);
        c.planner_config.seed = c.seed;
    }
    root.integer("duration_steps", c.duration_steps);
    root.number("dt", c.dt);
    root.integer("horizon", c.horizon);
    root.number("gain", c.gain);
    root.number("initial_reward", c.initial_reward);
    root.number("warmup_fraction", c.warmup_fraction);
    root.integer("hold_steps", c.hold_steps);
    if (root.has("eval_radius")) {
        double r = 0.0;
        root.number("eval_radius", r);
        c.eval_radius = r;
    }
    if (root.has("planner")) {
        std::string p;
        root.string("planner", p);
        check(root, "planner", [&] { c.planner = sim::planner_kind_from_string(p); });
    }

    if (root.has("sensor")) {
        auto s = root.section("sensor");
        s.number("cutoff", c.sensor.cutoff);
        s.number("degree", c.sensor.degree);
        s.finish();
        check(s, s.field("cutoff"), [&] { c.sensor.validate(); });
    }
    if (root.has("limits")) {
        auto s = root.section("limits");
        s.number("v_max", c.limits.v_max);
        s.number("a_max", c.limits.a_max);
        s.number("d_min", c.limits.d_min);
        s.finish();
    }

    bool grid_set = false;
    if (root.has("grid")) {
        auto s = root.section("grid");
        sim::GridSpec g = c.grid.value_or(sim::GridSpec{});
        s.integer("cols", g.cols);
        s.integer("rows", g.rows);
        s.number("spacing", g.spacing);
        if (s.has("origin")) g.origin = s.point("origin");
        s.finish();
        if (g.cols < 1 || g.rows < 1 || !(g.spacing > 0.0)) s.fail(root.field("grid"), "needs positive size and spacing");
        c.grid = g;
        c.targets = make_grid_targets(g.cols, g.rows, g.spacing, g.origin);
        grid_set = true;
    }
    if (root.has("targets")) {
        if (grid_set) root.fail("targets", "give either grid or targets, not both");
        c.targets.targets.clear();
        for (auto& s : root.list("targets")) {
            c.targets.targets.push_back(read_target(s));
            s.finish();
        }
        c.grid.reset();
    }

    if (root.has("fleet")) {
        c.fleet.clear();
        for (auto& s : root.list("fleet")) {
            VehicleState v;
            v.position = s.point("position");
            if (s.has("velocity")) v.velocity = s.point("velocity");
            s.finish();
            c.fleet.push_back(v);
        }
    } else if (root.has("vehicles") || grid_set) {
        int m = static_cast<int>(c.fleet.size());
        root.integer("vehicles", m);
        if (m < 1) root.fail("vehicles", "need at least one vehicle");
        if (!c.grid) root.fail("vehicles", "lower-edge placement needs a grid; list the fleet instead");
        c.fleet = sim::lower_edge_fleet(*c.grid, m);
    }

    if (root.has("cost")) {
        auto s = root.section("cost");
        s.number("input_change_penalty", c.cost.input_change_penalty);
        s.finish();
    }
    if (root.has("solver")) {
        auto s = root.section("solver");
        auto& sc = c.planner_config.solver;
        s.integer("max_outer_iters", sc.max_outer_iters);
        s.integer("max_inner_iters", sc.max_inner_iters);
        s.number("convergence_tol", sc.convergence_tol);
        s.number("feasibility_tol", sc.feasibility_tol);
        s.number("objective_rel_tol", sc.objective_rel_tol);
        s.integer("memory", sc.memory);
        if (s.has("wall_clock_cap_ms")) {
            double ms = 0.0;
            s.number("wall_clock_cap_ms", ms);
            sc.wall_clock_cap = ms / 1000.0;
        }
        s.finish();
        check(s, root.field("solver"), [&] { sc.validate(); });
    }
    if (root.has("multistart")) {
        auto s = root.section("multistart");
        s.integer("count", c.planner_config.multistart_count);
        s.number("sigma", c.planner_config.reward_noise_sigma);
        s.finish();
    }
    if (root.has("warm_start")) root.boolean("warm_start", c.planner_config.warm_start);
    if (root.has("constraint_margin")) root.number("constraint_margin", c.planner_config.constraint_margin);
    if (root.has("continuation")) {
        c.planner_config.sensor_continuation.clear();
        for (auto& s : root.list("continuation")) {
            mpc::SensorStage st;
            s.number("cutoff_factor", st.cutoff_factor);
            s.number("degree", st.degree);
            s.finish();
            c.planner_config.sensor_continuation.push_back(st);
        }
    }
    if (root.has("grasp")) {
        auto s = root.section("grasp");
        s.integer("iterations", c.grasp.iterations);
        s.number("rcl_alpha", c.grasp.rcl_alpha);
        s.number("horizon_lb", c.grasp_horizon_lb);
        s.number("horizon_ub", c.grasp_horizon_ub);
        s.number("speed", c.grasp.travel.speed);
        s.number("acceleration", c.grasp.travel.acceleration);
        s.finish();
    }
    if (root.has("injections")) {
        for (auto& s : root.list("injections")) {
            sim::Injection inj;
            s.integer("step", inj.step);
            inj.target = read_target(s);
            s.number("initial_reward", inj.initial_reward);
            s.finish();
            c.injections.push_back(inj);
        }
    }
    root.finish();
    check(root, "", [&] { c.validate(); });
    return c;
}

sim::ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_scenario(ss.str(), path);
}

std::string dump_scenario(const sim::ScenarioConfig& c) {
    json j;
    j["schema_version"] = 1;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["duration_steps"] = c.duration_steps;
    j["dt"] = c.dt;
    j["horizon"] = c.horizon;
    j["gain"] = c.gain;
    j["initial_reward"] = c.initial_reward;
    j["warmup_fraction"] = c.warmup_fraction;
    j["hold_steps"] = c.hold_steps;
    if (c.eval_radius) j["eval_radius"] = *c.eval_radius;
    j["planner"] = sim::to_string(c.planner);
    j["sensor"] = {{"cutoff", c.sensor.cutoff}, {"degree", c.sensor.degree}};
    j["limits"] = {{"v_max", c.limits.v_max}, {"a_max", c.limits.a_max}, {"d_min", c.limits.d_min}};
    bool static_targets = true;
    for (const auto& t : c.targets.targets) {
        static_targets = static_targets && t.drift_x.is_static() && t.drift_y.is_static();
    }
    if (c.grid && static_targets) {
        j["grid"] = {{"cols", c.grid->cols}, {"rows", c.grid->rows}, {"spacing", c.grid->spacing},
                     {"origin", {c.grid->origin.x(), c.grid->origin.y()}}};
    } else {
        json ts = json::array();
        for (const auto& t : c.targets.targets) {
            ts.push_back({{"position", {t.base.x(), t.base.y()}},
                          {"drift_x", drift_json(t.drift_x)},
                          {"drift_y", drift_json(t.drift_y)}});
        }
        j["targets"] = ts;
    }
    json fleet = json::array();
    for (const auto& v : c.fleet) {
        fleet.push_back({{"position", {v.position.x(), v.position.y()}},
                         {"velocity", {v.velocity.x(), v.velocity.y()}}});
    }
    j["fleet"] = fleet;
    j["cost"] = {{"input_change_penalty", c.cost.input_change_penalty}};
    const auto& sc = c.planner_config.solver;
    j["solver"] = {{"max_outer_iters", sc.max_outer_iters}, {"max_inner_iters", sc.max_inner_iters},
                   {"convergence_tol", sc.convergence_tol}, {"feasibility_tol", sc.feasibility_tol},
                   {"objective_rel_tol", sc.objective_rel_tol}, {"memory", sc.memory}};
    if (sc.wall_clock_cap) j["solver"]["wall_clock_cap_ms"] = *sc.wall_clock_cap * 1000.0;
    j["multistart"] = {{"count", c.planner_config.multistart_count},
                       {"sigma", c.planner_config.reward_noise_sigma}};
    j["warm_start"] = c.planner_config.warm_start;
    j["constraint_margin"] = c.planner_config.constraint_margin;
    json cont = json::array();
    for (const auto& st : c.planner_config.sensor_continuation) {
        cont.push_back({{"cutoff_factor", st.cutoff_factor}, {"degree", st.degree}});
    }
    j["continuation"] = cont;
    j["grasp"] = {{"iterations", c.grasp.iterations}, {"rcl_alpha", c.grasp.rcl_alpha},
                  {"horizon_lb", c.grasp_horizon_lb}, {"horizon_ub", c.grasp_horizon_ub},
                  {"speed", c.grasp.travel.speed}, {"acceleration", c.grasp.travel.acceleration}};
    json inj = json::array();
    for (const auto& i : c.injections) {
        inj.push_back({{"step", i.step},
                       {"position", {i.target.base.x(), i.target.base.y()}},
                       {"drift_x", drift_json(i.target.drift_x)},
                       {"drift_y", drift_json(i.target.drift_y)},
                       {"initial_reward", i.initial_reward}});
    }
    j["injections"] = inj;
    return j.dump(2) + "\n";
}

}  // namespace impdr::config
