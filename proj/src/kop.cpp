// SPDX-License-Identifier: Apache-2.0
#include "impdr/kop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "impdr/errors.hpp"

namespace impdr::kop {

double OpInstance::total_score() const {
    double s = 0.0;
    for (double v : scores) s += v;
    return s;
}

OpInstance read_op_instance(std::istream& in, const std::string& source) {
    OpInstance inst;
    inst.name = source;
    std::string line;
    int lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        if (!header) {
            if (!(ss >> inst.budget >> inst.vehicles)) {
                throw ParseError(source, lineno, "expected '<budget> <vehicles>'");
            }
            if (!(inst.budget > 0.0) || inst.vehicles < 1) {
                throw ParseError(source, lineno, "budget must be positive and vehicles at least 1");
            }
            header = true;
        } else {
            double x, y, score;
            if (!(ss >> x >> y >> score)) throw ParseError(source, lineno, "expected '<x> <y> <score>'");
            if (!std::isfinite(x) || !std::isfinite(y) || !(score >= 0.0)) {
                throw ParseError(source, lineno, "node needs finite coordinates and a non-negative score");
            }
            inst.nodes.emplace_back(x, y);
            inst.scores.push_back(score);
        }
        std::string extra;
        if (ss >> extra) throw ParseError(source, lineno, "unexpected trailing field '" + extra + "'");
    }
    if (!header) throw ParseError(source, lineno, "missing header line");
    if (inst.nodes.size() < 2) throw ParseError(source, lineno, "need at least a start and an end node");
    return inst;
}

OpInstance load_op_instance(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open instance file " + path);
    return read_op_instance(f, path);
}

int kop_horizon(double budget, double dt) {
    if (!(budget > 0.0) || !(dt > 0.0)) throw ContractError("budget and step must be positive");
    int n = static_cast<int>(std::lround(budget / dt));
    if (n * dt > budget * (1.0 + 1e-12)) --n;
    if (n < 1) throw ContractError("budget shorter than one step");
    return n;
}

mpc::OcpProblem configure_kop(const OpInstance& inst, double budget, const KopParams& params) {
    if (inst.nodes.size() < 2) throw ContractError("instance needs a start and an end node");
    mpc::OcpProblem p;
    p.horizon = kop_horizon(budget, params.dt);
    p.dt = params.dt;
    p.fleet.vehicles = {VehicleState{inst.start(), Vec2::Zero()}};
    p.fleet.limits = MotionLimits{params.v_max, params.a_max, 0.0};
    p.rewards.values = inst.scores;
    p.rewards.gain = 0.0;
    p.target_path.assign(p.horizon + 1, inst.nodes);
    p.sensor = params.sensor;
    p.cost.stage = mpc::StageCost::linear;
    p.cost.terminal = mpc::TerminalCost::endpoint;
    p.cost.terminal_weight = params.terminal_weight;
    p.cost.terminal_point = inst.end();
    p.cost.input_change_penalty = params.input_change_penalty;
    return p;
}

namespace {

/// Closest distance from `target` to q(tau) = q + v tau + a tau^2 / 2 on [0, dt].
double closest_on_segment(const Vec2& q, const Vec2& v, const Vec2& a, double dt, const Vec2& target) {
    auto dist = [&](double tau) { return (q + v * tau + 0.5 * a * tau * tau - target).norm(); };
    constexpr int samples = 32;
    int best = 0;
    double best_d = dist(0.0);
    for (int s = 1; s <= samples; ++s) {
        const double d = dist(dt * s / samples);
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    // Golden-section refinement inside the neighbouring samples.
    double lo = dt * std::max(0, best - 1) / samples, hi = dt * std::min(samples, best + 1) / samples;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = dist(c), fd = dist(d);
    for (int it = 0; it < 60; ++it) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = dist(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = dist(d);
        }
    }
    return std::min({best_d, fc, fd});
}

}  // namespace

KopEvaluation evaluate_kop(const OpInstance& inst, const mpc::OcpProblem& ocp,
                           const std::vector<double>& controls, const KopParams& params) {
    if (controls.size() != ocp.control_count() || ocp.vehicle_count() != 1) {
        throw ContractError("KOP evaluation expects one vehicle and a full control sequence");
    }
    KopEvaluation ev;
    ev.closest.assign(inst.nodes.size(), std::numeric_limits<double>::infinity());
    VehicleState s = ocp.fleet.vehicles[0];
    for (int k = 0; k < ocp.horizon; ++k) {
        const Vec2 a(controls[2 * k], controls[2 * k + 1]);
        ev.max_abs_accel = std::max({ev.max_abs_accel, std::abs(a.x()), std::abs(a.y())});
        for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
            ev.closest[i] = std::min(ev.closest[i],
                                     closest_on_segment(s.position, s.velocity, a, ocp.dt, inst.nodes[i]));
        }
        s = vehicle_step(s, a, ocp.dt);
        ev.max_speed = std::max(ev.max_speed, s.velocity.norm());
    }
    for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
        if (ev.closest[i] <= params.visit_radius) {
            ev.visited.push_back(static_cast<int>(i));
            ev.score += inst.scores[i];
        }
    }
    ev.endpoint_deviation = (s.position - inst.end()).norm();
    ev.duration = ocp.horizon * ocp.dt;
    return ev;
}

mpc::PlannerConfig default_kop_planner() {
    mpc::PlannerConfig cfg;
    cfg.multistart_count = 10;
    cfg.reward_noise_sigma = 0.1;
    cfg.warm_start = false;
    cfg.constraint_margin = 1e-4;
    cfg.sensor_continuation = {{4.0, 0.0}, {2.0, 0.0}};
    cfg.solver.max_outer_iters = 8;
    cfg.solver.max_inner_iters = 400;
    cfg.solver.convergence_tol = 1e-7;
    return cfg;
}

KopResult solve_kop(const OpInstance& inst, double budget, const KopParams& params,
                    const mpc::PlannerConfig& planner) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ocp = configure_kop(inst, budget, params);
    KopResult out;
    out.plan = mpc::plan_from(ocp, planner, std::vector<double>(ocp.control_count(), 0.0));

    auto better = [&](const KopEvaluation& a, const KopEvaluation& b) {
        const bool ea = a.endpoint_deviation <= params.visit_radius;
        const bool eb = b.endpoint_deviation <= params.visit_radius;
        if (ea != eb) return ea;
        if (a.score != b.score) return a.score > b.score;
        return a.endpoint_deviation < b.endpoint_deviation;
    };
    for (std::size_t s = 0; s < out.plan.starts.size(); ++s) {
        out.starts.push_back(evaluate_kop(inst, ocp, out.plan.starts[s].controls, params));
        if (s == 0 || better(out.starts.back(), out.best)) {
            out.best = out.starts.back();
            out.best_start = static_cast<int>(s);
        }
    }
    out.controls = out.plan.starts[out.best_start].controls;
    out.trajectory = mpc::rollout(ocp, out.controls, mpc::Saturation::hard);
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace impdr::kop
