// SPDX-License-Identifier: Apache-2.0
#include "impdr/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "impdr/errors.hpp"

namespace impdr::sim {

std::string to_string(PlannerKind k) {
    switch (k) {
        case PlannerKind::impdr: return "impdr";
        case PlannerKind::grasp_lb: return "grasp-lb";
        case PlannerKind::grasp_ub: return "grasp-ub";
        case PlannerKind::static_hold: return "static";
    }
    return "unknown";
}

PlannerKind planner_kind_from_string(const std::string& s) {
    if (s == "impdr") return PlannerKind::impdr;
    if (s == "grasp-lb") return PlannerKind::grasp_lb;
    if (s == "grasp-ub") return PlannerKind::grasp_ub;
    if (s == "static") return PlannerKind::static_hold;
    throw InputError("unknown planner '" + s + "' (expected impdr, grasp-lb, grasp-ub or static)");
}

void ScenarioConfig::validate() const {
    if (duration_steps < 1) throw ContractError("duration must be at least one step");
    if (horizon < 1) throw ContractError("horizon must be at least one step");
    if (!(dt > 0.0)) throw ContractError("sampling period must be positive");
    if (fleet.empty()) throw ContractError("scenario has no vehicles");
    if (hold_steps < 1) throw ContractError("hold_steps must be at least 1");
    if (!(warmup_fraction >= 0.0) || warmup_fraction >= 1.0) {
        throw ContractError("warm-up fraction must be in [0, 1)");
    }
    if (!(initial_reward >= 0.0) || !(gain >= 0.0)) {
        throw ContractError("initial reward and gain must be non-negative");
    }
    if (!(effective_eval_radius() > 0.0)) throw ContractError("evaluation radius must be positive");
    sensor.validate();
    planner_config.validate();
    if (planner == PlannerKind::grasp_lb || planner == PlannerKind::grasp_ub) {
        if (!grid) throw ContractError("the GRASP baselines need a grid scenario");
        if (static_cast<std::size_t>(grid->cols * grid->rows) != targets.size()) {
            throw ContractError("grid size does not match the target count");
        }
        for (const auto& t : targets.targets) {
            if (!t.drift_x.is_static() || !t.drift_y.is_static()) {
                throw ContractError("the GRASP baselines only support static targets");
            }
        }
        grasp.validate();
    }
}

MetricsSummary compute_metrics(const RunTrace& trace, double warmup_fraction,
                               const MotionLimits& limits) {
    if (trace.steps.empty()) throw ContractError("cannot compute metrics of an empty trace");
    MetricsSummary m;
    const int rows = static_cast<int>(trace.steps.size());
    m.warmup_steps = static_cast<int>(std::floor(warmup_fraction * rows));
    m.min_distance = std::numeric_limits<double>::infinity();
    double eq_sum = 0.0, t_sum = 0.0;
    int eq_n = 0, t_n = 0;
    for (int k = 0; k < rows; ++k) {
        const auto& s = trace.steps[k];
        double sum = 0.0;
        for (double r : s.r_eval) {
            sum += r;
            m.r_max = std::max(m.r_max, r);
        }
        const double avg = s.r_eval.empty() ? 0.0 : sum / static_cast<double>(s.r_eval.size());
        m.r_avg.push_back(avg);
        if (k >= m.warmup_steps) {
            eq_sum += avg;
            ++eq_n;
            m.r_avg_max_after_warmup = std::max(m.r_avg_max_after_warmup, avg);
        }
        if (s.solved) {
            t_sum += s.solver_ms;
            ++t_n;
            m.t_max = std::max(m.t_max, s.solver_ms);
        }
        m.min_distance = std::min(m.min_distance, s.min_distance);
        m.max_speed = std::max(m.max_speed, s.max_speed);
        if (s.max_speed > limits.v_max + 1e-6) ++m.speed_violations;
        if (s.min_distance < limits.d_min - 1e-6) ++m.separation_violations;
        for (const auto& a : s.control) {
            const double amax = std::max(std::abs(a.x()), std::abs(a.y()));
            m.max_abs_accel = std::max(m.max_abs_accel, amax);
            if (amax > limits.a_max) ++m.accel_violations;
        }
    }
    m.r_eq = eq_n > 0 ? eq_sum / eq_n : 0.0;
    m.t_avg = t_n > 0 ? t_sum / t_n : 0.0;
    return m;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

baselines::TravelModel travel_model(const ScenarioConfig& cfg) {
    baselines::TravelModel t = cfg.grasp.travel;
    t.mode = cfg.planner == PlannerKind::grasp_ub ? baselines::TravelMode::upper_bound
                                                  : baselines::TravelMode::lower_bound;
    return t;
}

}  // namespace

ClosedLoop::ClosedLoop(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    fleet_ = cfg_.fleet;
    r_model_.values.assign(cfg_.targets.size(), cfg_.initial_reward);
    r_model_.gain = cfg_.gain;
    r_eval_ = r_model_;
    last_control_.assign(fleet_.size(), Vec2::Zero());
    trace_.scenario = cfg_.name;
    trace_.planner = cfg_.planner;
    trace_.dt = cfg_.dt;
    mpc::check_fleet(FleetState{fleet_, cfg_.limits});
}

bool ClosedLoop::done() const noexcept { return trace_.failed || step_ >= cfg_.duration_steps; }

void ClosedLoop::inject_target(const Target& target, double initial_reward) {
    if (!(initial_reward >= 0.0)) throw ContractError("injected reward must be non-negative");
    cfg_.targets.targets.push_back(target);
    cfg_.grid.reset();
    r_model_.values.push_back(initial_reward);
    r_eval_.values.push_back(initial_reward);
}

void ClosedLoop::record(double solver_ms, bool solved, const std::string& status) {
    StepRecord rec;
    rec.step = step_;
    rec.time = step_ * cfg_.dt;
    rec.fleet = fleet_;
    rec.targets = target_positions_at(cfg_.targets, rec.time);
    rec.r_model = r_model_.values;
    rec.r_eval = r_eval_.values;
    rec.solver_ms = solver_ms;
    rec.solved = solved;
    rec.solver_status = status;
    std::vector<Vec2> pos;
    for (const auto& v : fleet_) {
        pos.push_back(v.position);
        rec.max_speed = std::max(rec.max_speed, v.velocity.norm());
    }
    rec.min_distance = pairwise_min_distance(pos).distance;
    trace_.steps.push_back(std::move(rec));
}

std::vector<Vec2> ClosedLoop::plan_impdr(double& solver_ms, std::string& status) {
    const std::size_t m = fleet_.size();
    if (warm_ && plan_age_ < cfg_.hold_steps) {
        std::vector<Vec2> u(m);
        for (std::size_t j = 0; j < m; ++j) u[j] = warm_->acceleration(plan_age_, j);
        ++plan_age_;
        return u;
    }
    mpc::OcpProblem ocp;
    ocp.horizon = cfg_.horizon;
    ocp.dt = cfg_.dt;
    ocp.fleet = FleetState{fleet_, cfg_.limits};
    ocp.rewards = r_model_;
    for (int k = 0; k <= cfg_.horizon; ++k) {
        ocp.target_path.push_back(target_positions_at(cfg_.targets, (step_ + k) * cfg_.dt));
    }
    ocp.sensor = cfg_.sensor;
    ocp.cost = cfg_.cost;
    ocp.previous_input = last_control_;

    std::optional<mpc::ControlPlan> warm;
    if (warm_ && warm_->vehicles == m) {
        // plan_step shifts once; the remaining held intervals are shifted here.
        warm = *warm_;
        for (int s = 1; s < plan_age_; ++s) warm->controls = mpc::shift_warm_start(*warm);
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto res = mpc::plan_step(ocp, cfg_.planner_config, warm ? &*warm : nullptr,
                              static_cast<std::uint64_t>(step_));
    solver_ms = elapsed_ms(t0);
    status = nlp::to_string(res.report.status);
    if (!res.feasible) status += "/infeasible";
    warm_ = std::move(res.plan);
    plan_age_ = 1;
    std::vector<Vec2> u(m);
    for (std::size_t j = 0; j < m; ++j) u[j] = warm_->acceleration(0, j);
    return u;
}

std::vector<Vec2> ClosedLoop::plan_grasp(double& solver_ms, std::string& status) {
    const auto& spec = *cfg_.grid;
    const baselines::GridGraph graph(spec.cols, spec.rows, spec.spacing, spec.origin);
    if (grasp_positions_.empty() || grasp_age_ + 1 >= static_cast<int>(grasp_positions_.size())) {
        const auto travel = travel_model(cfg_);
        std::vector<int> starts;
        for (const auto& v : fleet_) starts.push_back(graph.nearest_node(v.position));
        auto gcfg = cfg_.grasp;
        gcfg.travel = travel;
        gcfg.horizon = cfg_.planner == PlannerKind::grasp_ub ? cfg_.grasp_horizon_ub
                                                             : cfg_.grasp_horizon_lb;
        gcfg.gain = cfg_.gain;
        gcfg.seed = cfg_.seed + static_cast<std::uint64_t>(step_);
        const auto t0 = std::chrono::steady_clock::now();
        const auto plan = baselines::grasp_plan(graph, r_model_.values, starts, gcfg);
        solver_ms = elapsed_ms(t0);
        status = "grasp";
        const double tau = baselines::edge_travel_time(spec.spacing, travel);
        const int steps = std::max(1, static_cast<int>(std::lround(tau / cfg_.dt)));
        grasp_positions_ = baselines::execute_team_plan(plan, graph, travel, cfg_.dt, steps);
        grasp_age_ = 0;
    }
    // Kinematic baseline: positions come from the plan, the control column is
    // the implied finite-difference acceleration.
    const auto& next = grasp_positions_[grasp_age_ + 1];
    std::vector<Vec2> u(fleet_.size());
    for (std::size_t j = 0; j < fleet_.size(); ++j) {
        const Vec2 v_next = (next[j] - fleet_[j].position) / cfg_.dt;
        u[j] = (v_next - fleet_[j].velocity) / cfg_.dt;
    }
    return u;
}

void ClosedLoop::step() {
    if (done()) return;
    for (const auto& inj : cfg_.injections) {
        if (inj.step == step_) inject_target(inj.target, inj.initial_reward);
    }
    double solver_ms = 0.0;
    std::string status;
    std::vector<Vec2> u;
    try {
        switch (cfg_.planner) {
            case PlannerKind::impdr: u = plan_impdr(solver_ms, status); break;
            case PlannerKind::grasp_lb:
            case PlannerKind::grasp_ub: u = plan_grasp(solver_ms, status); break;
            case PlannerKind::static_hold: u.assign(fleet_.size(), Vec2::Zero()); break;
        }
    } catch (const std::exception& e) {
        trace_.failed = true;
        trace_.failure = "step " + std::to_string(step_) + ": " + e.what();
        record(solver_ms, false, "failed");
        return;
    }
    const bool solved = !status.empty();
    record(solver_ms, solved, status);
    trace_.steps.back().control = u;

    const double t = step_ * cfg_.dt;
    const auto targets = target_positions_at(cfg_.targets, t);
    std::vector<Vec2> pos;
    for (const auto& v : fleet_) pos.push_back(v.position);
    r_model_ = reward_step(r_model_, targets, pos, cfg_.sensor, cfg_.dt);
    r_eval_ = eval_reward_step(r_eval_, targets, pos, cfg_.effective_eval_radius(), cfg_.dt);

    if (cfg_.planner == PlannerKind::grasp_lb || cfg_.planner == PlannerKind::grasp_ub) {
        const auto& next = grasp_positions_[grasp_age_ + 1];
        for (std::size_t j = 0; j < fleet_.size(); ++j) {
            fleet_[j].velocity = (next[j] - fleet_[j].position) / cfg_.dt;
            fleet_[j].position = next[j];
        }
        ++grasp_age_;
    } else {
        for (std::size_t j = 0; j < fleet_.size(); ++j) fleet_[j] = vehicle_step(fleet_[j], u[j], cfg_.dt);
    }
    last_control_ = u;
    ++step_;
}

RunTrace ClosedLoop::finish() {
    while (!done()) step();
    if (!trace_.failed) record(0.0, false, "");
    trace_.metrics = compute_metrics(trace_, cfg_.warmup_fraction, cfg_.limits);
    return trace_;
}

RunTrace run_closed_loop(const ScenarioConfig& cfg) {
    ClosedLoop loop(cfg);
    return loop.finish();
}

std::vector<std::vector<VehicleState>> replay_controls(const RunTrace& trace) {
    std::vector<std::vector<VehicleState>> out;
    if (trace.steps.empty()) return out;
    out.push_back(trace.steps.front().fleet);
    for (const auto& s : trace.steps) {
        if (s.control.empty()) break;
        auto next = out.back();
        for (std::size_t j = 0; j < next.size(); ++j) next[j] = vehicle_step(next[j], s.control[j], trace.dt);
        out.push_back(std::move(next));
    }
    return out;
}

std::vector<VehicleState> lower_edge_fleet(const GridSpec& grid, int vehicles) {
    if (vehicles < 1) throw ContractError("need at least one vehicle");
    const double width = (grid.cols - 1) * grid.spacing;
    std::vector<VehicleState> out;
    for (int j = 0; j < vehicles; ++j) {
        out.push_back({grid.origin + Vec2((j + 1) * width / (vehicles + 1), 0.0), Vec2::Zero()});
    }
    return out;
}

ScenarioConfig default_scenario() {
    ScenarioConfig c;
    c.name = "default";
    c.grid = GridSpec{10, 10, 1.0, Vec2::Zero()};
    c.targets = make_grid_targets(10, 10, 1.0);
    c.fleet = lower_edge_fleet(*c.grid, 3);
    c.sensor = {0.25, 8.0};
    c.limits = {1.0, 2.0, 2.0 * c.sensor.cutoff};
    c.gain = 1.0;
    c.initial_reward = 10.0;
    c.dt = 0.25;
    c.horizon = 20;
    c.duration_steps = 1200;
    // A short budget per step; the heavy-tailed first stage gives vehicles far
    // from any target a usable gradient.
    c.planner_config.solver.convergence_tol = 1e-6;
    c.planner_config.solver.max_inner_iters = 20;
    c.planner_config.solver.max_outer_iters = 5;
    c.planner_config.sensor_continuation = {{1.0, 2.0}};
    return c;
}

std::vector<std::string> scenario_names() {
    return {"exploration", "flotsam", "grid-sweep", "horizon-sweep", "top-compare"};
}

ScenarioConfig scenario_library(const std::string& name, int a, int b) {
    ScenarioConfig c = default_scenario();
    if (name == "grid-sweep") {
        const int np = a > 0 ? a : 100, m = b > 0 ? b : 3;
        const int w = static_cast<int>(std::lround(std::sqrt(static_cast<double>(np))));
        if (w * w != np) throw InputError("grid-sweep needs a square target count, got " + std::to_string(np));
        c.name = "grid-sweep-" + std::to_string(np) + "-" + std::to_string(m);
        c.grid = GridSpec{w, w, 1.0, Vec2::Zero()};
        c.targets = make_grid_targets(w, w, 1.0);
        c.fleet = lower_edge_fleet(*c.grid, m);
        return c;
    }
    if (name == "horizon-sweep") {
        const int m = a > 0 ? a : 3, n = b > 0 ? b : 20;
        c.name = "horizon-sweep-" + std::to_string(m) + "-" + std::to_string(n);
        c.fleet = lower_edge_fleet(*c.grid, m);
        c.horizon = n;
        return c;
    }
    if (name == "exploration") {
        c.name = "exploration";
        c.grid = GridSpec{20, 20, 0.5, Vec2::Zero()};
        c.targets = make_grid_targets(20, 20, 0.5);
        c.sensor = {0.5, 4.0};
        c.limits.d_min = 2.0 * c.sensor.cutoff;
        c.fleet = lower_edge_fleet(*c.grid, 2);
        c.horizon = 20;
        return c;
    }
    if (name == "flotsam") {
        c.name = "flotsam";
        c.grid.reset();
        c.targets = make_grid_targets(3, 4, 2.0);
        for (auto& t : c.targets.targets) {
            t.drift_x.amplitude = 0.5;
            t.drift_x.angular_velocity = std::numbers::pi / 10.0;
            t.drift_x.drift_velocity = 0.0;
        }
        c.sensor = {0.5, 8.0};
        c.limits.d_min = 2.0 * c.sensor.cutoff;
        c.fleet = {{Vec2(0.0, 0.0), Vec2::Zero()}, {Vec2(0.0, 6.0), Vec2::Zero()}};
        c.horizon = 40;
        c.duration_steps = 400;
        return c;
    }
    if (name == "top-compare") {
        c.name = "top-compare";
        c.dt = 0.1;
        c.horizon = 20;
        c.sensor = {0.05, 2.0};
        c.limits.d_min = 2.0 * c.sensor.cutoff;
        c.duration_steps = 3000;
        c.planner_config.sensor_continuation = {{4.0, 0.0}, {2.0, 0.0}};
        // Start on grid nodes so the grid baselines begin where the vehicles are.
        const baselines::GridGraph g(10, 10, 1.0);
        for (auto& v : c.fleet) v.position = g.position(g.nearest_node(v.position));
        return c;
    }
    std::string valid;
    for (const auto& n : scenario_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("unknown scenario '" + name + "' (valid: " + valid + ")");
}

}  // namespace impdr::sim
